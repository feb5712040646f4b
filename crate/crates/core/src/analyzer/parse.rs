//! Heuristic segmentation of a free-text address into components.
//!
//! Works on the analyzer's token stream (with comma-segment tags) so every
//! field is a contiguous run of normalized tokens from the input:
//!
//! * zip: the last 5-digit token right after a region code, else a trailing
//!   5-digit token; a following 4-digit token is the extension.
//! * state: the region code before the zip, else the last region code.
//! * country: first country token after the state/zip.
//! * street: starts at the first all-digit token not preceded by a unit
//!   designator, ends at the last street suffix in its comma segment and
//!   absorbs trailing numbers, directionals and unit designators.
//! * name: everything before the street; city: between street and state.

use serde::{Deserialize, Serialize};

use super::tables::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Name,
    StreetName,
    City,
    State,
    ZipCode,
    ExtnZip,
    Country,
}

impl Component {
    pub const ALL: [Component; 7] = [
        Component::Name,
        Component::StreetName,
        Component::City,
        Component::State,
        Component::ZipCode,
        Component::ExtnZip,
        Component::Country,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Name => "name",
            Component::StreetName => "street_name",
            Component::City => "city",
            Component::State => "state",
            Component::ZipCode => "zip_code",
            Component::ExtnZip => "extn_zip",
            Component::Country => "country",
        }
    }
}

/// Address split into the weighted components. Fields hold normalized text
/// and may be empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAddress {
    pub name: String,
    pub street_name: String,
    pub city: String,
    pub state: String,
    pub zip_code: String,
    pub extn_zip: String,
    pub country: String,
}

impl ParsedAddress {
    pub fn get(&self, c: Component) -> &str {
        match c {
            Component::Name => &self.name,
            Component::StreetName => &self.street_name,
            Component::City => &self.city,
            Component::State => &self.state,
            Component::ZipCode => &self.zip_code,
            Component::ExtnZip => &self.extn_zip,
            Component::Country => &self.country,
        }
    }

    pub fn is_empty(&self) -> bool {
        Component::ALL.iter().all(|&c| self.get(c).is_empty())
    }
}

fn join(tokens: &[(String, usize)]) -> String {
    tokens
        .iter()
        .map(|(t, _)| t.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

pub(super) fn parse(tokens: &[(String, usize)]) -> Option<ParsedAddress> {
    let n = tokens.len();
    let word = |i: usize| tokens[i].0.as_str();

    let zip = (1..n)
        .rev()
        .find(|&i| is_zip5(word(i)) && is_region(word(i - 1)))
        .or_else(|| trailing_zip(tokens));

    let state = match zip {
        Some(z) if z > 0 && is_region(word(z - 1)) => Some(z - 1),
        _ => (1..zip.unwrap_or(n)).rev().find(|&i| is_region(word(i))),
    };

    let extn = zip.filter(|&z| z + 1 < n && word(z + 1).len() == 4 && is_digits(word(z + 1)));

    let bound = [state, zip].into_iter().flatten().min().unwrap_or(n);
    let tail_start = match [state, zip].into_iter().flatten().max() {
        Some(last) => last + 1,
        // Without a state or zip only a final country token is trusted.
        None => n.saturating_sub(1),
    };
    let country = (tail_start..n).find(|&i| is_country(word(i)));

    let street_start = (0..bound).find(|&i| is_digits(word(i)) && !(i > 0 && is_unit(word(i - 1))));

    let (name, street, city) = match street_start {
        Some(start) => {
            let end = street_end(tokens, start, bound);
            (
                &tokens[..start],
                &tokens[start..=end],
                &tokens[end + 1..bound],
            )
        }
        None => {
            let head = &tokens[..bound];
            let last_seg = head.last().map(|t| t.1);
            let split = head.iter().position(|t| Some(t.1) == last_seg).unwrap_or(0);
            // Several comma segments: the last one is the city.
            if split > 0 {
                (&head[..split], &head[..0], &head[split..])
            } else {
                (&head[..0], &head[..0], head)
            }
        }
    };

    let parsed = ParsedAddress {
        name: join(name),
        street_name: join(street),
        city: join(city),
        state: state.map(|i| word(i).to_string()).unwrap_or_default(),
        zip_code: zip.map(|i| word(i).to_string()).unwrap_or_default(),
        extn_zip: extn.map(|i| word(i + 1).to_string()).unwrap_or_default(),
        country: country.map(|i| word(i).to_string()).unwrap_or_default(),
    };
    (!parsed.is_empty()).then_some(parsed)
}

/// A 5-digit token after which nothing but a 4-digit extension carries digits.
fn trailing_zip(tokens: &[(String, usize)]) -> Option<usize> {
    let last_digit = tokens.iter().rposition(|t| has_digit(&t.0))?;
    let w = |i: usize| tokens[i].0.as_str();
    if is_zip5(w(last_digit)) {
        return Some(last_digit);
    }
    (last_digit > 0
        && w(last_digit).len() == 4
        && is_digits(w(last_digit))
        && is_zip5(w(last_digit - 1)))
    .then(|| last_digit - 1)
}

fn street_end(tokens: &[(String, usize)], start: usize, bound: usize) -> usize {
    let seg = tokens[start].1;
    let seg_end = (start..bound)
        .take_while(|&i| tokens[i].1 == seg)
        .last()
        .unwrap_or(start);
    let mut end = (start + 1..=seg_end)
        .rev()
        .find(|&i| is_street_suffix(&tokens[i].0))
        .unwrap_or(seg_end);
    while end < seg_end {
        let next = tokens[end + 1].0.as_str();
        if has_digit(next) || is_directional(next) || is_unit(next) {
            end += 1;
        } else {
            break;
        }
    }
    end
}
