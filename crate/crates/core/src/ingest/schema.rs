//! Declarative instrument schema: item columns, exclusions, and feature
//! derivation rules, parsed from a human-editable TOML file.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use crate::error::SchemaError;

/// How one output feature is derived from raw item columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DerivationRule {
    /// Copy an item column verbatim.
    Passthrough { item: String },
    /// Arithmetic sum of several item columns.
    Sum { items: Vec<String> },
    /// Copy a pre-computed score column that is not a survey item.
    ExternalScore { column: String },
}

/// One derived feature: output name plus its rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureRule {
    pub name: String,
    pub rule: DerivationRule,
}

/// Optional clinical tags attached to a feature for explanation exports.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct FeatureTag {
    pub domain: String,
    pub nf: String,
}

/// Schema of a single assessment instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentSchema {
    pub name: String,
    pub file: String,
    pub category: String,
    pub items: Vec<String>,
    pub features: Vec<FeatureRule>,
    pub excluded: Vec<String>,
    /// Inclusive legal value range for items, used by the synthetic
    /// generator. Overridable per item.
    pub item_range: (i64, i64),
    pub item_range_overrides: BTreeMap<String, (i64, i64)>,
}

impl InstrumentSchema {
    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    /// Legal value range of one item column.
    pub fn range_of(&self, item: &str) -> (i64, i64) {
        self.item_range_overrides
            .get(item)
            .copied()
            .unwrap_or(self.item_range)
    }

    /// Item columns a feature depends on (empty for external scores).
    pub fn items_of_feature(&self, feature: &str) -> Option<Vec<String>> {
        self.features.iter().find(|f| f.name == feature).map(|f| match &f.rule {
            DerivationRule::Passthrough { item } => vec![item.clone()],
            DerivationRule::Sum { items } => items.clone(),
            DerivationRule::ExternalScore { .. } => Vec::new(),
        })
    }

    fn validate(&self) -> Result<(), SchemaError> {
        let mut seen_items = BTreeSet::new();
        for item in &self.items {
            if !seen_items.insert(item.clone()) {
                return Err(SchemaError::DuplicateItem {
                    instrument: self.name.clone(),
                    item: item.clone(),
                });
            }
        }
        for item in &self.excluded {
            if !seen_items.contains(item) {
                return Err(SchemaError::UnknownExcludedItem {
                    instrument: self.name.clone(),
                    item: item.clone(),
                });
            }
        }
        let excluded: BTreeSet<&String> = self.excluded.iter().collect();
        for feature in &self.features {
            let referenced: Vec<&String> = match &feature.rule {
                DerivationRule::Passthrough { item } => vec![item],
                DerivationRule::Sum { items } => items.iter().collect(),
                DerivationRule::ExternalScore { .. } => Vec::new(),
            };
            for item in referenced {
                if !seen_items.contains(item) {
                    return Err(SchemaError::UnknownItem {
                        instrument: self.name.clone(),
                        feature: feature.name.clone(),
                        item: item.clone(),
                    });
                }
                if excluded.contains(item) {
                    return Err(SchemaError::ExcludedItemUsed {
                        instrument: self.name.clone(),
                        item: item.clone(),
                        feature: feature.name.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Full schema set: all instruments in output column order, plus the
/// subject/visit key columns and optional feature tags.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaSet {
    pub version: u32,
    pub subject_column: String,
    pub visit_column: String,
    pub instruments: Vec<InstrumentSchema>,
    pub feature_tags: BTreeMap<String, FeatureTag>,
}

impl SchemaSet {
    /// Parse and validate a schema from TOML text.
    pub fn from_toml(text: &str) -> Result<Self, SchemaError> {
        let raw: RawSchemaSet =
            toml::from_str(text).map_err(|e| SchemaError::Parse(e.to_string()))?;
        let set = SchemaSet {
            version: raw.version,
            subject_column: raw.subject_column,
            visit_column: raw.visit_column,
            instruments: raw
                .instruments
                .into_iter()
                .map(RawInstrument::into_schema)
                .collect::<Result<Vec<_>, _>>()?,
            feature_tags: raw.feature_tags,
        };
        set.validate()?;
        Ok(set)
    }

    /// The shipped 15-instrument schema.
    pub fn builtin() -> Self {
        Self::from_toml(crate::BUILTIN_SCHEMA_TOML).expect("builtin schema is valid")
    }

    /// All derived feature names in output column order.
    pub fn feature_order(&self) -> Vec<String> {
        self.instruments
            .iter()
            .flat_map(|m| m.features.iter().map(|f| f.name.clone()))
            .collect()
    }

    pub fn total_features(&self) -> usize {
        self.instruments.iter().map(|m| m.features.len()).sum()
    }

    pub fn total_items(&self) -> usize {
        self.instruments.iter().map(|m| m.items.len()).sum()
    }

    pub fn instrument(&self, name: &str) -> Option<&InstrumentSchema> {
        self.instruments.iter().find(|m| m.name == name)
    }

    /// Instrument owning a feature name.
    pub fn instrument_of_feature(&self, feature: &str) -> Option<&InstrumentSchema> {
        self.instruments
            .iter()
            .find(|m| m.features.iter().any(|f| f.name == feature))
    }

    fn validate(&self) -> Result<(), SchemaError> {
        if self.instruments.is_empty() {
            return Err(SchemaError::Empty);
        }
        let mut owner: BTreeMap<String, String> = BTreeMap::new();
        for inst in &self.instruments {
            inst.validate()?;
            for feature in &inst.features {
                if let Some(first) = owner.insert(feature.name.clone(), inst.name.clone()) {
                    return Err(SchemaError::DuplicateFeature {
                        feature: feature.name.clone(),
                        first,
                        second: inst.name.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// TOML wire format
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct RawSchemaSet {
    version: u32,
    subject_column: String,
    visit_column: String,
    instruments: Vec<RawInstrument>,
    #[serde(default)]
    feature_tags: BTreeMap<String, FeatureTag>,
}

#[derive(Deserialize)]
struct RawInstrument {
    name: String,
    file: String,
    #[serde(default = "default_category")]
    category: String,
    items: Vec<String>,
    features: Vec<RawFeature>,
    #[serde(default)]
    excluded: Vec<String>,
    #[serde(default = "default_range")]
    item_range: (i64, i64),
    #[serde(default)]
    item_range_overrides: BTreeMap<String, (i64, i64)>,
}

fn default_category() -> String {
    "subjective".to_string()
}

fn default_range() -> (i64, i64) {
    (0, 4)
}

/// A feature entry is either a bare string (passthrough of the same-named
/// item) or a table selecting exactly one rule.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawFeature {
    Bare(String),
    Table {
        name: String,
        #[serde(default)]
        item: Option<String>,
        #[serde(default)]
        sum: Option<Vec<String>>,
        #[serde(default)]
        score: Option<String>,
    },
}

impl RawInstrument {
    fn into_schema(self) -> Result<InstrumentSchema, SchemaError> {
        let mut features = Vec::with_capacity(self.features.len());
        for f in self.features {
            features.push(match f {
                RawFeature::Bare(name) => FeatureRule {
                    rule: DerivationRule::Passthrough { item: name.clone() },
                    name,
                },
                RawFeature::Table {
                    name,
                    item,
                    sum,
                    score,
                } => {
                    let rule = match (item, sum, score) {
                        (Some(item), None, None) => DerivationRule::Passthrough { item },
                        (None, Some(items), None) => DerivationRule::Sum { items },
                        (None, None, Some(column)) => DerivationRule::ExternalScore { column },
                        _ => {
                            return Err(SchemaError::AmbiguousRule {
                                instrument: self.name.clone(),
                                feature: name,
                            })
                        }
                    };
                    FeatureRule { name, rule }
                }
            });
        }
        Ok(InstrumentSchema {
            name: self.name,
            file: self.file,
            category: self.category,
            items: self.items,
            features,
            excluded: self.excluded,
            item_range: self.item_range,
            item_range_overrides: self.item_range_overrides,
        })
    }
}
