use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::token::Category;

/// Protocol slug to category lookup. Total: unknown protocols map to
/// [`Category::Other`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryMap {
    entries: BTreeMap<String, Category>,
}

impl CategoryMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reads a two-column `protocol,category` CSV. A leading header row is
    /// skipped when its first cell is `protocol`.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).flexible(true).from_reader(reader);
        let mut map = CategoryMap::new();
        for (idx, row) in rdr.records().enumerate() {
            let row = row?;
            if row.iter().all(|c| c.is_empty()) {
                continue;
            }
            if idx == 0 && row.get(0).is_some_and(|c| c.eq_ignore_ascii_case("protocol")) {
                continue;
            }
            if row.len() != 2 {
                return Err(Error::Config(format!("category map line {}: expected 2 columns", idx + 1)));
            }
            let category: Category = row[1].parse()?;
            map.insert(&row[0], category)?;
        }
        Ok(map)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    /// Adds an entry; re-adding a protocol with a different category is a
    /// configuration error.
    pub fn insert(&mut self, protocol: &str, category: Category) -> Result<()> {
        let key = protocol.trim().to_ascii_lowercase();
        match self.entries.get(&key) {
            Some(&existing) if existing != category => Err(Error::Config(format!(
                "protocol `{key}` mapped to both {existing} and {category}"
            ))),
            _ => {
                self.entries.insert(key, category);
                Ok(())
            }
        }
    }

    pub fn get(&self, protocol: &str) -> Category {
        self.entries.get(&protocol.trim().to_ascii_lowercase()).copied().unwrap_or(Category::Other)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Category)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }
}
