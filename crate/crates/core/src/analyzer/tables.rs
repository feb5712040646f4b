//! Lookup tables used by the component segmenter. All entries are in
//! normalized (post-abbreviation) form.

/// US state and territory codes plus Canadian province codes.
pub(crate) const REGION_CODES: &[&str] = &[
    "al", "ak", "az", "ar", "ca", "co", "ct", "de", "fl", "ga", "hi", "id", "il", "in", "ia", "ks",
    "ky", "la", "me", "md", "ma", "mi", "mn", "ms", "mo", "mt", "ne", "nv", "nh", "nj", "nm", "ny",
    "nc", "nd", "oh", "ok", "or", "pa", "ri", "sc", "sd", "tn", "tx", "ut", "vt", "va", "wa", "wv",
    "wi", "wy", "dc", "pr", "gu", "vi", "ab", "bc", "mb", "nb", "nl", "ns", "nt", "nu", "on", "pe",
    "qc", "sk", "yt",
];

pub(crate) const COUNTRIES: &[&str] = &["usa", "canada", "india", "mexico"];

pub(crate) const STREET_SUFFIXES: &[&str] = &[
    "road",
    "street",
    "avenue",
    "drive",
    "boulevard",
    "way",
    "lane",
    "court",
    "place",
    "highway",
    "parkway",
    "circle",
    "trail",
    "terrace",
    "plaza",
    "square",
    "pike",
    "freeway",
    "expressway",
];

pub(crate) const UNIT_DESIGNATORS: &[&str] = &[
    "suite", "bldg", "building", "dock", "unit", "apt", "floor", "room",
];

pub(crate) const DIRECTIONALS: &[&str] = &["north", "south", "east", "west"];

pub(crate) const LEGAL_SUFFIXES: &[&str] = &[
    "inc",
    "incorporated",
    "llc",
    "ltd",
    "corp",
    "corporation",
    "co",
];

pub(crate) fn is_region(t: &str) -> bool {
    REGION_CODES.contains(&t)
}

pub(crate) fn is_country(t: &str) -> bool {
    COUNTRIES.contains(&t)
}

pub(crate) fn is_street_suffix(t: &str) -> bool {
    STREET_SUFFIXES.contains(&t)
}

pub(crate) fn is_unit(t: &str) -> bool {
    UNIT_DESIGNATORS.contains(&t)
}

pub(crate) fn is_directional(t: &str) -> bool {
    DIRECTIONALS.contains(&t)
}

pub(crate) fn is_legal_suffix(t: &str) -> bool {
    LEGAL_SUFFIXES.contains(&t)
}

pub(crate) fn is_digits(t: &str) -> bool {
    !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit())
}

pub(crate) fn has_digit(t: &str) -> bool {
    t.bytes().any(|b| b.is_ascii_digit())
}

pub(crate) fn is_zip5(t: &str) -> bool {
    t.len() == 5 && is_digits(t)
}
