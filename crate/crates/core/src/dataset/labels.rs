use std::collections::BTreeMap;
use std::path::Path;

use super::DatasetError;

/// Alias file compiled into the crate.
pub const DEFAULT_ALIASES: &str = include_str!("aliases.txt");

const CLASS_NAMES: [&str; 20] = [
    "violin",
    "viola",
    "cello",
    "double-bass",
    "guitar",
    "banjo",
    "mandolin",
    "clarinet",
    "bass-clarinet",
    "saxophone",
    "flute",
    "oboe",
    "bassoon",
    "contrabassoon",
    "english-horn",
    "french-horn",
    "trombone",
    "trumpet",
    "tuba",
    "chromatic-percussion",
];

/// Index of the catch-all percussion class.
pub const FALLBACK_CLASS: usize = 19;

/// Leading token of a file name, lowercased, extension stripped.
pub fn parse_label(filename: &str) -> Result<String, DatasetError> {
    let name = Path::new(filename)
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or(filename);
    let stem = match name.rfind('.') {
        Some(i) if i > 0 => &name[..i],
        _ => name,
    };
    match stem.split_once('_') {
        Some((head, _)) if !head.is_empty() => Ok(head.to_lowercase()),
        _ => Err(DatasetError::MalformedName(filename.to_string())),
    }
}

fn normalize(token: &str) -> String {
    token
        .trim()
        .to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

/// The frozen 20-class table plus instrument-name aliases.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTable {
    aliases: BTreeMap<String, usize>,
}

impl Default for ClassTable {
    fn default() -> Self {
        Self::with_aliases(DEFAULT_ALIASES).expect("bundled alias table parses")
    }
}

impl ClassTable {
    /// Table using the given alias text instead of the bundled one.
    pub fn with_aliases(text: &str) -> Result<Self, DatasetError> {
        let mut aliases = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(alias), Some(target), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(DatasetError::Alias {
                    line: i + 1,
                    reason: format!("expected `<alias> <class>`, got {raw:?}"),
                });
            };
            let idx = Self::lookup_name(&normalize(target)).ok_or_else(|| DatasetError::Alias {
                line: i + 1,
                reason: format!("unknown class {target:?}"),
            })?;
            aliases.insert(normalize(alias), idx);
        }
        Ok(Self { aliases })
    }

    pub fn from_alias_file(path: &Path) -> Result<Self, DatasetError> {
        Self::with_aliases(&std::fs::read_to_string(path)?)
    }

    fn lookup_name(name: &str) -> Option<usize> {
        CLASS_NAMES.iter().position(|&n| n == name)
    }

    pub fn len(&self) -> usize {
        CLASS_NAMES.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> &'static [&'static str] {
        &CLASS_NAMES
    }

    pub fn name(&self, index: usize) -> Option<&'static str> {
        CLASS_NAMES.get(index).copied()
    }

    /// Class index of an instrument token. Unknown instruments are percussion.
    pub fn map_class(&self, instrument: &str) -> usize {
        let key = normalize(instrument);
        Self::lookup_name(&key)
            .or_else(|| self.aliases.get(&key).copied())
            .unwrap_or(FALLBACK_CLASS)
    }
}
