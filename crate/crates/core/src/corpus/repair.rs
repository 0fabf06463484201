use std::collections::BTreeMap;
use std::fmt;

const DEFAULT_ENTRIES: &[(&str, char)] = &[
    ("eacute", 'é'),
    ("egrave", 'è'),
    ("agrave", 'à'),
    ("ecirc", 'ê'),
    ("ocirc", 'ô'),
    ("ccedil", 'ç'),
    ("uuml", 'ü'),
    ("ouml", 'ö'),
    ("auml", 'ä'),
    ("szlig", 'ß'),
    ("icirc", 'î'),
    ("acirc", 'â'),
    ("ucirc", 'û'),
    ("ugrave", 'ù'),
    ("iuml", 'ï'),
    ("euml", 'ë'),
    ("oelig", 'œ'),
    ("Eacute", 'É'),
    ("Egrave", 'È'),
    ("Agrave", 'À'),
    ("Ecirc", 'Ê'),
    ("Ocirc", 'Ô'),
    ("Ccedil", 'Ç'),
    ("Uuml", 'Ü'),
    ("Ouml", 'Ö'),
    ("Auml", 'Ä'),
    ("Icirc", 'Î'),
    ("Acirc", 'Â'),
    ("Ucirc", 'Û'),
    ("Ugrave", 'Ù'),
    ("Iuml", 'Ï'),
    ("Euml", 'Ë'),
    ("OElig", 'Œ'),
];

/// Shortest and longest entity names considered.
pub const MIN_NAME_LEN: usize = 2;
pub const MAX_NAME_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvalidRepairEntry(pub String);

impl fmt::Display for InvalidRepairEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid repair table entry: {}", self.0)
    }
}

impl std::error::Error for InvalidRepairEntry {}

/// Maps corrupted entity names (`%eacute`, `&eacute;`) back to characters.
///
/// Names are matched case-sensitively after a `%` or `&`, longest name
/// first, with an optional trailing `;` consumed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairTable {
    entries: BTreeMap<String, String>,
}

impl Default for RepairTable {
    fn default() -> Self {
        Self {
            entries: DEFAULT_ENTRIES
                .iter()
                .map(|&(name, c)| (name.to_string(), c.to_string()))
                .collect(),
        }
    }
}

impl RepairTable {
    /// Builds a table from `(name, replacement)` pairs. Names must be ASCII
    /// letters within the length bounds; replacements must be non-empty and
    /// free of ASCII letters, `%`, `&` and `;`.
    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self, InvalidRepairEntry>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut entries = BTreeMap::new();
        for (k, v) in pairs {
            let (name, value) = (k.into(), v.into());
            if !(MIN_NAME_LEN..=MAX_NAME_LEN).contains(&name.len()) || !name.bytes().all(|b| b.is_ascii_alphabetic()) {
                return Err(InvalidRepairEntry(format!("name {name:?}")));
            }
            if value.is_empty() || value.chars().any(|c| c.is_ascii_alphabetic() || "%&;".contains(c)) {
                return Err(InvalidRepairEntry(format!("replacement {value:?} for {name:?}")));
            }
            entries.insert(name, value);
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.entries.get(name).map(String::as_str)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Substitutes every table entry in `raw`. Entity-like tokens that are
    /// not in the table are left alone and counted in `unknown`.
    pub fn repair(&self, raw: &str, unknown: &mut BTreeMap<String, usize>) -> String {
        let bytes = raw.as_bytes();
        let mut out = String::with_capacity(raw.len());
        let mut copied = 0;
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] != b'%' && bytes[i] != b'&' {
                i += 1;
                continue;
            }
            let run = bytes[i + 1..].iter().take_while(|b| b.is_ascii_alphabetic()).count();
            let longest = run.min(MAX_NAME_LEN);
            let hit = (MIN_NAME_LEN..=longest)
                .rev()
                .find_map(|len| self.get(&raw[i + 1..i + 1 + len]).map(|rep| (len, rep)));
            match hit {
                Some((len, rep)) => {
                    out.push_str(&raw[copied..i]);
                    out.push_str(rep);
                    let mut end = i + 1 + len;
                    if bytes.get(end) == Some(&b';') {
                        end += 1;
                    }
                    copied = end;
                    i = end;
                }
                None => {
                    if (MIN_NAME_LEN..=MAX_NAME_LEN).contains(&run) {
                        *unknown.entry(raw[i..i + 1 + run].to_string()).or_default() += 1;
                    }
                    i += 1;
                }
            }
        }
        out.push_str(&raw[copied..]);
        out
    }

    /// Whether `text` still contains a table entry in either framing.
    pub fn has_residue(&self, text: &str) -> bool {
        let mut scratch = BTreeMap::new();
        self.repair(text, &mut scratch) != text
    }
}

/// Repairs `raw` with the default table.
pub fn repair_encoding(raw: &str) -> String {
    RepairTable::default().repair(raw, &mut BTreeMap::new())
}
