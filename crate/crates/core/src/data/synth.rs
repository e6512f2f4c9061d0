//! Seeded generator for poison-control-style case sets.
//!
//! Each case of class `c` keeps every literature symptom of `h_c` with
//! probability `hit_rate`; a kept symptom is swapped for its designated
//! synonym (a name outside the literature vocabulary) with probability
//! `drift_rate`; `Poisson(confounder_rate)` spurious symptoms are drawn
//! uniformly from the other classes' literature symptoms. Meta data come from
//! a per-class mixture: with probability `hotspot_rate` a copy of one of the
//! class's hotspot records, otherwise independent draws from mildly peaked
//! per-field marginals.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, WeightedIndex};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, RawCase, RawLiterature};
use super::meta::{AgeGroup, Gender, MetaRecord};
use crate::error::{Error, Result};

/// Per-class meta-data distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaSkew {
    /// Weights over child, adult, elder.
    pub age_group: Vec<f64>,
    /// Weights over male, female, unknown.
    pub gender: Vec<f64>,
    /// Weights over `SynthSpec::aetiologies`.
    pub aetiology: Vec<f64>,
    /// Weights over `SynthSpec::points_of_entry`.
    pub point_of_entry: Vec<f64>,
    /// Weights over weekdays 0..=6.
    pub weekday: Vec<f64>,
    /// Weights over `SynthSpec::years`, inclusive.
    pub year: Vec<f64>,
    pub hotspot_rate: f64,
    pub hotspots: Vec<MetaRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub class_counts: BTreeMap<String, usize>,
    pub hit_rate: f64,
    pub confounder_rate: f64,
    pub drift_rate: f64,
    pub meta_skew: BTreeMap<String, MetaSkew>,
    pub seed: u64,
    pub literature: BTreeMap<String, Vec<String>>,
    pub synonyms: BTreeMap<String, String>,
    pub aetiologies: Vec<String>,
    pub points_of_entry: Vec<String>,
    pub years: (i32, i32),
}

/// Case counts per toxin group of the reference poison-control cohort (8995 cases).
pub const DEFAULT_CLASS_COUNTS: [(&str, usize); 10] = [
    ("ace_inhibitors", 119),
    ("acetaminophen", 1376),
    ("antidepressants", 1073),
    ("benzodiazepines", 577),
    ("beta_blockers", 288),
    ("calcium_channel_antagonists", 75),
    ("cocaine", 256),
    ("ethanol", 2890),
    ("nsaids", 1462),
    ("opiates", 879),
];

const DEFAULT_LITERATURE: [(&str, &[&str]); 10] = [
    (
        "ace_inhibitors",
        &["angioedema", "cough", "dizziness", "hyperkalemia", "hypotension", "somnolence"],
    ),
    (
        "acetaminophen",
        &["abdominal_pain", "diaphoresis", "hepatotoxicity", "malaise", "nausea", "vomiting"],
    ),
    (
        "antidepressants",
        &["agitation", "clonus", "hyperthermia", "mydriasis", "seizure", "somnolence", "tachycardia", "tremor"],
    ),
    (
        "benzodiazepines",
        &["ataxia", "confusion", "hypotension", "respiratory_depression", "slurred_speech", "somnolence"],
    ),
    (
        "beta_blockers",
        &["bradycardia", "bronchospasm", "dizziness", "hypoglycemia", "hypotension", "syncope"],
    ),
    (
        "calcium_channel_antagonists",
        &["av_block", "bradycardia", "dizziness", "flushing", "hyperglycemia", "hypotension"],
    ),
    (
        "cocaine",
        &["agitation", "chest_pain", "diaphoresis", "hypertension", "hyperthermia", "mydriasis", "seizure", "tachycardia"],
    ),
    (
        "ethanol",
        &["ataxia", "confusion", "flushing", "hypothermia", "nausea", "slurred_speech", "somnolence", "vomiting"],
    ),
    (
        "nsaids",
        &["abdominal_pain", "gastrointestinal_bleeding", "headache", "nausea", "tinnitus", "vomiting"],
    ),
    (
        "opiates",
        &["bradycardia", "hypotension", "miosis", "nausea", "respiratory_depression", "somnolence"],
    ),
];

const DEFAULT_SYNONYMS: [(&str, &str); 37] = [
    ("abdominal_pain", "stomach_ache"),
    ("agitation", "restlessness"),
    ("angioedema", "facial_swelling"),
    ("ataxia", "unsteady_gait"),
    ("av_block", "heart_block"),
    ("bradycardia", "slow_pulse"),
    ("bronchospasm", "wheezing"),
    ("chest_pain", "chest_tightness"),
    ("clonus", "muscle_jerks"),
    ("confusion", "disorientation"),
    ("cough", "dry_cough"),
    ("diaphoresis", "sweating"),
    ("dizziness", "vertigo"),
    ("flushing", "red_face"),
    ("gastrointestinal_bleeding", "black_stool"),
    ("headache", "head_pain"),
    ("hepatotoxicity", "elevated_liver_enzymes"),
    ("hyperglycemia", "high_blood_sugar"),
    ("hyperkalemia", "high_potassium"),
    ("hypertension", "high_blood_pressure"),
    ("hyperthermia", "fever"),
    ("hypoglycemia", "low_blood_sugar"),
    ("hypotension", "low_blood_pressure"),
    ("hypothermia", "low_body_temperature"),
    ("malaise", "feeling_unwell"),
    ("miosis", "pinpoint_pupils"),
    ("mydriasis", "dilated_pupils"),
    ("nausea", "queasiness"),
    ("respiratory_depression", "shallow_breathing"),
    ("seizure", "convulsions"),
    ("slurred_speech", "dysarthria"),
    ("somnolence", "drowsiness"),
    ("syncope", "fainting"),
    ("tachycardia", "palpitations"),
    ("tinnitus", "ringing_ears"),
    ("tremor", "shaking"),
    ("vomiting", "emesis"),
];

const DEFAULT_AETIOLOGIES: [&str; 4] = ["abuse", "accidental", "iatrogenic", "intentional"];
const DEFAULT_POINTS_OF_ENTRY: [&str; 4] = ["dermal", "inhalation", "injection", "oral"];
const DEFAULT_YEARS: (i32, i32) = (2001, 2019);

/// Fixed seed for the default meta skew so the default spec is a constant.
const DEFAULT_SKEW_SEED: u64 = 0x7058_4e45_5400;

fn peaked(n: usize, preferred: usize, mass: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let rest = (1.0 - mass) / (n - 1) as f64;
    (0..n).map(|i| if i == preferred { mass } else { rest }).collect()
}

impl Default for SynthSpec {
    fn default() -> Self {
        let aetiologies: Vec<String> = DEFAULT_AETIOLOGIES.iter().map(|s| s.to_string()).collect();
        let points_of_entry: Vec<String> =
            DEFAULT_POINTS_OF_ENTRY.iter().map(|s| s.to_string()).collect();
        let years = DEFAULT_YEARS;
        let year_count = (years.1 - years.0 + 1) as usize;

        let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SKEW_SEED);
        let mut meta_skew = BTreeMap::new();
        for &(name, count) in &DEFAULT_CLASS_COUNTS {
            let hotspot_count = (count / 40).max(2);
            let hotspots = (0..hotspot_count)
                .map(|_| MetaRecord {
                    age_group: AgeGroup::ALL[rng.gen_range(0..3)],
                    gender: Gender::ALL[rng.gen_range(0..2)],
                    aetiology: aetiologies[rng.gen_range(0..aetiologies.len())].clone(),
                    point_of_entry: points_of_entry[rng.gen_range(0..points_of_entry.len())].clone(),
                    weekday: rng.gen_range(0..7),
                    year: rng.gen_range(years.0..=years.1),
                })
                .collect();
            let skew = MetaSkew {
                age_group: peaked(3, rng.gen_range(0..3), 0.6),
                gender: peaked(3, rng.gen_range(0..2), 0.6),
                aetiology: peaked(aetiologies.len(), rng.gen_range(0..aetiologies.len()), 0.6),
                point_of_entry: peaked(
                    points_of_entry.len(),
                    rng.gen_range(0..points_of_entry.len()),
                    0.6,
                ),
                weekday: peaked(7, rng.gen_range(0..7), 0.3),
                year: peaked(year_count, rng.gen_range(0..year_count), 0.2),
                hotspot_rate: 0.5,
                hotspots,
            };
            meta_skew.insert(name.to_string(), skew);
        }

        Self {
            class_counts: DEFAULT_CLASS_COUNTS
                .iter()
                .map(|&(n, c)| (n.to_string(), c))
                .collect(),
            hit_rate: 0.3,
            confounder_rate: 2.0,
            drift_rate: 0.3,
            meta_skew,
            seed: 0,
            literature: DEFAULT_LITERATURE
                .iter()
                .map(|&(n, s)| (n.to_string(), s.iter().map(|x| x.to_string()).collect()))
                .collect(),
            synonyms: DEFAULT_SYNONYMS
                .iter()
                .map(|&(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            aetiologies,
            points_of_entry,
            years,
        }
    }
}

fn check_weights(what: &str, weights: &[f64], expected_len: usize) -> Result<()> {
    if weights.len() != expected_len {
        return Err(Error::SynthSpec(format!(
            "{what}: {} weights, expected {expected_len}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::SynthSpec(format!("{what}: weights must be non-negative with positive sum")));
    }
    Ok(())
}

fn check_probability(what: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::SynthSpec(format!("{what} = {p} is not a probability")));
    }
    Ok(())
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        check_probability("hit_rate", self.hit_rate)?;
        check_probability("drift_rate", self.drift_rate)?;
        if !self.confounder_rate.is_finite() || self.confounder_rate < 0.0 {
            return Err(Error::SynthSpec("confounder_rate must be >= 0".into()));
        }
        if self.class_counts.is_empty() {
            return Err(Error::SynthSpec("no classes".into()));
        }
        if self.years.0 > self.years.1 {
            return Err(Error::SynthSpec("empty year range".into()));
        }
        if self.aetiologies.is_empty() || self.points_of_entry.is_empty() {
            return Err(Error::SynthSpec("empty meta alphabet".into()));
        }
        let literature_symptoms: BTreeSet<&str> = self
            .literature
            .values()
            .flatten()
            .map(String::as_str)
            .collect();
        let year_count = (self.years.1 - self.years.0 + 1) as usize;
        for (class, &count) in &self.class_counts {
            if count == 0 {
                return Err(Error::SynthSpec(format!("class {class} has count 0")));
            }
            let lit = self
                .literature
                .get(class)
                .ok_or_else(|| Error::SynthSpec(format!("class {class} has no literature profile")))?;
            if lit.is_empty() {
                return Err(Error::SynthSpec(format!("class {class} has an empty profile")));
            }
            if self.drift_rate > 0.0 {
                for s in lit {
                    let syn = self
                        .synonyms
                        .get(s)
                        .ok_or_else(|| Error::SynthSpec(format!("symptom {s} has no synonym")))?;
                    if literature_symptoms.contains(syn.as_str()) {
                        return Err(Error::SynthSpec(format!(
                            "synonym {syn} of {s} is itself a literature symptom"
                        )));
                    }
                }
            }
            let skew = self
                .meta_skew
                .get(class)
                .ok_or_else(|| Error::SynthSpec(format!("class {class} has no meta skew")))?;
            check_weights("age_group", &skew.age_group, 3)?;
            check_weights("gender", &skew.gender, 3)?;
            check_weights("aetiology", &skew.aetiology, self.aetiologies.len())?;
            check_weights("point_of_entry", &skew.point_of_entry, self.points_of_entry.len())?;
            check_weights("weekday", &skew.weekday, 7)?;
            check_weights("year", &skew.year, year_count)?;
            check_probability("hotspot_rate", skew.hotspot_rate)?;
            if skew.hotspot_rate > 0.0 && skew.hotspots.is_empty() {
                return Err(Error::SynthSpec(format!("class {class} has hotspot_rate > 0 but no hotspots")));
            }
            for h in &skew.hotspots {
                if !self.aetiologies.contains(&h.aetiology)
                    || !self.points_of_entry.contains(&h.point_of_entry)
                    || h.weekday > 6
                    || h.year < self.years.0
                    || h.year > self.years.1
                {
                    return Err(Error::SynthSpec(format!("class {class} has an out-of-alphabet hotspot")));
                }
            }
        }
        Ok(())
    }
}

/// Generated dataset plus the ground-truth synonym map.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub synonyms: BTreeMap<String, String>,
}

fn weighted(weights: &[f64]) -> WeightedIndex<f64> {
    WeightedIndex::new(weights).expect("weights validated")
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let poisson = if spec.confounder_rate > 0.0 {
        Some(Poisson::new(spec.confounder_rate).map_err(|e| Error::SynthSpec(e.to_string()))?)
    } else {
        None
    };

    let mut drafts: Vec<(Vec<String>, MetaRecord, String)> = Vec::new();
    for (class, &count) in &spec.class_counts {
        let profile = &spec.literature[class];
        let own: BTreeSet<&str> = profile.iter().map(String::as_str).collect();
        let pool: Vec<&str> = spec
            .class_counts
            .keys()
            .filter(|other| *other != class)
            .flat_map(|other| spec.literature[other].iter().map(String::as_str))
            .filter(|s| !own.contains(s))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let skew = &spec.meta_skew[class];
        let age = weighted(&skew.age_group);
        let gender = weighted(&skew.gender);
        let aet = weighted(&skew.aetiology);
        let poe = weighted(&skew.point_of_entry);
        let weekday = weighted(&skew.weekday);
        let year = weighted(&skew.year);

        for _ in 0..count {
            let symptoms = loop {
                let mut set = BTreeSet::new();
                for s in profile {
                    if rng.gen::<f64>() < spec.hit_rate {
                        if rng.gen::<f64>() < spec.drift_rate {
                            set.insert(spec.synonyms[s].clone());
                        } else {
                            set.insert(s.clone());
                        }
                    }
                }
                if let Some(p) = &poisson {
                    let k = p.sample(&mut rng) as usize;
                    if !pool.is_empty() {
                        for _ in 0..k {
                            set.insert(pool[rng.gen_range(0..pool.len())].to_string());
                        }
                    }
                }
                if !set.is_empty() {
                    break set.into_iter().collect::<Vec<_>>();
                }
            };
            let meta = if !skew.hotspots.is_empty() && rng.gen::<f64>() < skew.hotspot_rate {
                skew.hotspots[rng.gen_range(0..skew.hotspots.len())].clone()
            } else {
                MetaRecord {
                    age_group: AgeGroup::ALL[age.sample(&mut rng)],
                    gender: Gender::ALL[gender.sample(&mut rng)],
                    aetiology: spec.aetiologies[aet.sample(&mut rng)].clone(),
                    point_of_entry: spec.points_of_entry[poe.sample(&mut rng)].clone(),
                    weekday: weekday.sample(&mut rng) as u8,
                    year: spec.years.0 + year.sample(&mut rng) as i32,
                }
            };
            drafts.push((symptoms, meta, class.clone()));
        }
    }
    drafts.shuffle(&mut rng);

    let raw_cases = drafts
        .into_iter()
        .enumerate()
        .map(|(i, (symptoms, meta, label))| RawCase {
            id: format!("case-{i:05}"),
            symptoms,
            meta,
            label: Some(label),
        })
        .collect();
    let raw_literature = spec
        .class_counts
        .keys()
        .map(|class| RawLiterature {
            toxin: class.clone(),
            symptoms: spec.literature[class].clone(),
        })
        .collect();
    let used: BTreeSet<&String> = spec
        .class_counts
        .keys()
        .flat_map(|c| spec.literature[c].iter())
        .collect();
    let synonyms = spec
        .synonyms
        .iter()
        .filter(|(k, _)| used.contains(k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(SynthOutput {
        dataset: Dataset::new(raw_literature, raw_cases)?,
        synonyms,
    })
}
