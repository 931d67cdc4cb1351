//! Synthetic cohort generator. Emits one CSV per instrument in the exact
//! ingest input format, plus the stage table and a ground-truth manifest, so
//! the whole pipeline is testable without access-restricted data.
//!
//! Ordinal items are drawn by thresholding latent Gaussians into each item's
//! legal range. Discriminative signal is planted per class boundary: the
//! classes above the boundary get a shifted latent mean on the planted
//! feature's underlying items.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SeverityClass;
use crate::error::SynthError;
use crate::ingest::schema::{DerivationRule, SchemaSet};

/// Class boundary a planted signal separates. The classes above the
/// boundary (Mild and ModSevere for the healthy boundary, ModSevere for the
/// other two) carry the shifted mean, so staging stays monotone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    #[serde(rename = "healthy_vs_mild")]
    HealthyVsMild,
    #[serde(rename = "healthy_vs_modsevere")]
    HealthyVsModSevere,
    #[serde(rename = "mild_vs_modsevere")]
    MildVsModSevere,
}

impl Boundary {
    fn shifted_classes(self) -> &'static [SeverityClass] {
        match self {
            Boundary::HealthyVsMild => &[SeverityClass::Mild, SeverityClass::ModSevere],
            Boundary::HealthyVsModSevere | Boundary::MildVsModSevere => {
                &[SeverityClass::ModSevere]
            }
        }
    }
}

/// One planted discriminative feature: its latent mean shifts by
/// `strength` standard deviations for the boundary's upper classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSignal {
    pub feature: String,
    pub boundary: Boundary,
    pub strength: f64,
}

/// Declarative cohort recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSpec {
    pub seed: u64,
    pub healthy: usize,
    pub mild: usize,
    pub mod_severe: usize,
    /// Extra visits carrying the sentinel stage code 101.
    pub sentinel_count: usize,
    /// Per-visit probability that the row carries missing data (one to
    /// three random item cells blanked). Row-wise deletion then drops the
    /// whole visit, so this is the expected fraction of rows lost.
    pub missing_rate: f64,
    pub visits_per_subject: usize,
    pub planted: Vec<PlantedSignal>,
}

impl Default for CohortSpec {
    /// Mirrors the study's severity skew at one tenth scale, with planted
    /// motor signal on each boundary and mild missingness, so the default
    /// run exercises the imbalance and cleaning paths.
    fn default() -> Self {
        Self {
            seed: 20240501,
            healthy: 769,
            mild: 736,
            mod_severe: 55,
            sentinel_count: 8,
            missing_rate: 0.02,
            visits_per_subject: 3,
            planted: vec![
                PlantedSignal {
                    feature: "NP3BRADY".into(),
                    boundary: Boundary::HealthyVsMild,
                    strength: 3.0,
                },
                PlantedSignal {
                    feature: "NP3RTCON".into(),
                    boundary: Boundary::HealthyVsMild,
                    strength: 2.5,
                },
                PlantedSignal {
                    feature: "NP3FACXP".into(),
                    boundary: Boundary::HealthyVsMild,
                    strength: 2.0,
                },
                PlantedSignal {
                    feature: "NP3PSTBL".into(),
                    boundary: Boundary::MildVsModSevere,
                    strength: 3.5,
                },
                PlantedSignal {
                    feature: "NP3GAIT".into(),
                    boundary: Boundary::MildVsModSevere,
                    strength: 3.0,
                },
                PlantedSignal {
                    feature: "NP2WALK".into(),
                    boundary: Boundary::MildVsModSevere,
                    strength: 2.5,
                },
            ],
        }
    }
}

impl CohortSpec {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::InvalidSpec(e.to_string()))
    }

    fn validate(&self, schema: &SchemaSet) -> Result<(), SynthError> {
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(SynthError::InvalidSpec(format!(
                "missing_rate must be in [0, 1), got {}",
                self.missing_rate
            )));
        }
        if self.visits_per_subject == 0 {
            return Err(SynthError::InvalidSpec(
                "visits_per_subject must be >= 1".into(),
            ));
        }
        let features: std::collections::BTreeSet<String> =
            schema.feature_order().into_iter().collect();
        for signal in &self.planted {
            if !features.contains(&signal.feature) {
                return Err(SynthError::UnknownPlantedFeature(signal.feature.clone()));
            }
        }
        Ok(())
    }

    /// Features that separate each task's two (or three) classes: the
    /// planted signals whose shifted-class set distinguishes the task's
    /// classes. A healthy-boundary signal shifts Mild and ModSevere
    /// equally, so it does not discriminate Mild from ModSevere.
    pub fn discriminative_features(&self) -> BTreeMap<String, Vec<String>> {
        let mut map = BTreeMap::new();
        let for_pair = |a: SeverityClass, b: SeverityClass| -> Vec<String> {
            self.planted
                .iter()
                .filter(|s| {
                    let shifted = s.boundary.shifted_classes();
                    shifted.contains(&a) != shifted.contains(&b)
                })
                .map(|s| s.feature.clone())
                .collect()
        };
        map.insert(
            "healthy_vs_mild".to_string(),
            for_pair(SeverityClass::Healthy, SeverityClass::Mild),
        );
        map.insert(
            "healthy_vs_modsevere".to_string(),
            for_pair(SeverityClass::Healthy, SeverityClass::ModSevere),
        );
        map.insert(
            "mild_vs_modsevere".to_string(),
            for_pair(SeverityClass::Mild, SeverityClass::ModSevere),
        );
        let mut all: Vec<String> = self.planted.iter().map(|s| s.feature.clone()).collect();
        all.dedup();
        map.insert("three_class".to_string(), all);
        map
    }
}

/// Ground truth emitted next to the CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortManifest {
    pub spec: CohortSpec,
    pub subjects: usize,
    pub total_visits: usize,
    /// Generated visit counts per class, sentinel rows under "Sentinel".
    pub class_visit_counts: BTreeMap<String, usize>,
    pub stage_histogram: BTreeMap<i64, usize>,
    pub missing_cells: usize,
    pub rows_with_missing: usize,
    /// Visits with no missing cell, per class: what survives cleaning.
    pub clean_class_counts: BTreeMap<String, usize>,
    pub task_discriminative_features: BTreeMap<String, Vec<String>>,
}

struct Visit {
    subject: String,
    visit: String,
    class: SeverityClass,
    stage: i64,
}

/// Generate the cohort into `out_dir`: one CSV per instrument, stages.csv,
/// and manifest.json. Byte-deterministic per (spec, schema).
pub fn generate_cohort(
    spec: &CohortSpec,
    schema: &SchemaSet,
    out_dir: &Path,
) -> Result<CohortManifest, SynthError> {
    spec.validate(schema)?;
    std::fs::create_dir_all(out_dir).map_err(|e| SynthError::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Resolve planted shifts down to item columns: (instrument, item) -> sd multiples.
    let mut item_shift: BTreeMap<(String, String), Vec<(Boundary, f64)>> = BTreeMap::new();
    for signal in &spec.planted {
        let inst = schema
            .instrument_of_feature(&signal.feature)
            .expect("validated feature");
        let items = inst
            .items_of_feature(&signal.feature)
            .expect("validated feature");
        for item in items {
            item_shift
                .entry((inst.name.clone(), item))
                .or_default()
                .push((signal.boundary, signal.strength));
        }
    }

    // Lay out visits: subjects get consecutive ids, all of a subject's
    // visits share the class and stage.
    let mut visits: Vec<Visit> = Vec::new();
    let mut subject_counter = 3000usize;
    let mut plan = |class: SeverityClass, count: usize, rng: &mut ChaCha8Rng, visits: &mut Vec<Visit>| {
        let mut remaining = count;
        while remaining > 0 {
            let subject = format!("{subject_counter}");
            subject_counter += 1;
            let stage = match class {
                SeverityClass::Healthy => 0,
                SeverityClass::Mild => {
                    if rng.gen_bool(0.25) {
                        1
                    } else {
                        2
                    }
                }
                SeverityClass::ModSevere => {
                    let r: f64 = rng.gen();
                    if r < 0.8 {
                        3
                    } else if r < 0.95 {
                        4
                    } else {
                        5
                    }
                }
                SeverityClass::Excluded => 101,
            };
            let take = remaining.min(spec.visits_per_subject);
            for v in 0..take {
                let visit = if v == 0 { "BL".to_string() } else { format!("V{v:02}") };
                visits.push(Visit {
                    subject: subject.clone(),
                    visit,
                    class,
                    stage,
                });
            }
            remaining -= take;
        }
    };
    plan(SeverityClass::Healthy, spec.healthy, &mut rng, &mut visits);
    plan(SeverityClass::Mild, spec.mild, &mut rng, &mut visits);
    plan(SeverityClass::ModSevere, spec.mod_severe, &mut rng, &mut visits);
    plan(SeverityClass::Excluded, spec.sentinel_count, &mut rng, &mut visits);

    // Missingness is decided up front, per visit: flagged visits blank one
    // to three item cells chosen over the concatenated item layout. Doing
    // this in its own pass keeps the value stream aligned regardless of the
    // draws' outcomes.
    let total_items = schema.total_items();
    let mut blanked: Vec<std::collections::BTreeSet<usize>> = Vec::with_capacity(visits.len());
    for _ in &visits {
        let mut cells = std::collections::BTreeSet::new();
        if rng.gen_bool(spec.missing_rate) {
            let n_blanks = rng.gen_range(1..=3usize);
            for _ in 0..n_blanks {
                cells.insert(rng.gen_range(0..total_items));
            }
        }
        blanked.push(cells);
    }
    let mut missing_cells = 0usize;
    let mut visit_has_missing = vec![false; visits.len()];
    let mut item_offset = 0usize;
    for inst in &schema.instruments {
        let path = out_dir.join(&inst.file);
        let mut file = std::fs::File::create(&path).map_err(|e| SynthError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let score_columns: Vec<&str> = inst
            .features
            .iter()
            .filter_map(|f| match &f.rule {
                DerivationRule::ExternalScore { column } => Some(column.as_str()),
                _ => None,
            })
            .collect();
        let mut header = vec![schema.subject_column.clone(), schema.visit_column.clone()];
        header.extend(inst.items.iter().cloned());
        header.extend(score_columns.iter().map(|s| s.to_string()));
        writeln(&mut file, &path, &header.join(","))?;

        for (row, visit) in visits.iter().enumerate() {
            let mut cells: Vec<String> = vec![visit.subject.clone(), visit.visit.clone()];
            let mut item_sum = 0.0;
            for (item_pos, item) in inst.items.iter().enumerate() {
                let (lo, hi) = inst.range_of(item);
                let span = (hi - lo) as f64;
                let sd = (0.18 * span).max(0.35);
                let mut mean = lo as f64 + 0.3 * span;
                if let Some(shifts) = item_shift.get(&(inst.name.clone(), item.clone())) {
                    // Sentinel rows are drawn like Mild so exclusion, not
                    // separability, is what removes them.
                    let effective = if visit.class == SeverityClass::Excluded {
                        SeverityClass::Mild
                    } else {
                        visit.class
                    };
                    for (boundary, strength) in shifts {
                        if boundary.shifted_classes().contains(&effective) {
                            mean += strength * sd;
                        }
                    }
                }
                let latent = mean + sd * standard_normal(&mut rng);
                let value = (latent.round() as i64).clamp(lo, hi);
                if blanked[row].contains(&(item_offset + item_pos)) {
                    missing_cells += 1;
                    visit_has_missing[row] = true;
                    cells.push(String::new());
                } else {
                    item_sum += value as f64;
                    cells.push(value.to_string());
                }
            }
            // External score columns carry a synthetic clinician total.
            for _ in &score_columns {
                cells.push(format!("{}", item_sum));
            }
            writeln(&mut file, &path, &cells.join(","))?;
        }
        item_offset += inst.items.len();
    }

    // Stage table.
    let stage_path = out_dir.join("stages.csv");
    let mut stage_file = std::fs::File::create(&stage_path).map_err(|e| SynthError::Io {
        path: stage_path.display().to_string(),
        source: e,
    })?;
    writeln(
        &mut stage_file,
        &stage_path,
        &format!("{},{},COHORT,NHY", schema.subject_column, schema.visit_column),
    )?;
    for visit in &visits {
        let cohort = if visit.class == SeverityClass::Healthy { "HC" } else { "PD" };
        writeln(
            &mut stage_file,
            &stage_path,
            &format!("{},{},{},{}", visit.subject, visit.visit, cohort, visit.stage),
        )?;
    }

    // Bookkeeping.
    let class_name = |c: SeverityClass| match c {
        SeverityClass::Excluded => "Sentinel".to_string(),
        other => other.name().to_string(),
    };
    let mut class_visit_counts = BTreeMap::new();
    let mut clean_class_counts = BTreeMap::new();
    let mut stage_histogram = BTreeMap::new();
    let mut subjects = std::collections::BTreeSet::new();
    for (row, visit) in visits.iter().enumerate() {
        *class_visit_counts.entry(class_name(visit.class)).or_insert(0) += 1;
        if !visit_has_missing[row] {
            *clean_class_counts.entry(class_name(visit.class)).or_insert(0) += 1;
        }
        *stage_histogram.entry(visit.stage).or_insert(0) += 1;
        subjects.insert(visit.subject.clone());
    }
    let manifest = CohortManifest {
        spec: spec.clone(),
        subjects: subjects.len(),
        total_visits: visits.len(),
        class_visit_counts,
        stage_histogram,
        missing_cells,
        rows_with_missing: visit_has_missing.iter().filter(|m| **m).count(),
        clean_class_counts,
        task_discriminative_features: spec.discriminative_features(),
    };
    let manifest_path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, text).map_err(|e| SynthError::Io {
        path: manifest_path.display().to_string(),
        source: e,
    })?;

    Ok(manifest)
}

fn writeln(file: &mut std::fs::File, path: &Path, line: &str) -> Result<(), SynthError> {
    file.write_all(line.as_bytes())
        .and_then(|_| file.write_all(b"\n"))
        .map_err(|e| SynthError::Io {
            path: path.display().to_string(),
            source: e,
        })
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
