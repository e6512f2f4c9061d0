//! Case meta data and its one-hot encoding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeGroup {
    Child,
    Adult,
    Elder,
}

impl AgeGroup {
    pub const ALL: [AgeGroup; 3] = [AgeGroup::Child, AgeGroup::Adult, AgeGroup::Elder];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub const ALL: [Gender; 3] = [Gender::Male, Gender::Female, Gender::Unknown];
}

/// Non-symptom information attached to a case.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetaRecord {
    pub age_group: AgeGroup,
    pub gender: Gender,
    pub aetiology: String,
    pub point_of_entry: String,
    pub weekday: u8,
    pub year: i32,
}

/// A meta field usable for graph construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaField {
    AgeGroup,
    Gender,
    Aetiology,
    PointOfEntry,
    Weekday,
    Year,
}

impl MetaField {
    pub const ALL: [MetaField; 6] = [
        MetaField::AgeGroup,
        MetaField::Gender,
        MetaField::Aetiology,
        MetaField::PointOfEntry,
        MetaField::Weekday,
        MetaField::Year,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetaField::AgeGroup => "age_group",
            MetaField::Gender => "gender",
            MetaField::Aetiology => "aetiology",
            MetaField::PointOfEntry => "point_of_entry",
            MetaField::Weekday => "weekday",
            MetaField::Year => "year",
        }
    }
}

impl fmt::Display for MetaField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetaField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetaField::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown meta field {s:?}")))
    }
}

/// Value of one meta field, comparable by exact equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetaValue {
    Age(AgeGroup),
    Gender(Gender),
    Text(String),
    Int(i64),
}

impl MetaRecord {
    pub fn value(&self, field: MetaField) -> MetaValue {
        match field {
            MetaField::AgeGroup => MetaValue::Age(self.age_group),
            MetaField::Gender => MetaValue::Gender(self.gender),
            MetaField::Aetiology => MetaValue::Text(self.aetiology.clone()),
            MetaField::PointOfEntry => MetaValue::Text(self.point_of_entry.clone()),
            MetaField::Weekday => MetaValue::Int(i64::from(self.weekday)),
            MetaField::Year => MetaValue::Int(i64::from(self.year)),
        }
    }

    /// Tuple of the selected field values; two records are consistent iff keys match.
    pub fn key(&self, fields: &[MetaField]) -> Vec<MetaValue> {
        fields.iter().map(|&f| self.value(f)).collect()
    }

    pub fn consistent_with(&self, other: &MetaRecord, fields: &[MetaField]) -> bool {
        fields.iter().all(|&f| self.value(f) == other.value(f))
    }
}

/// Declared alphabets of the open categorical fields plus the year range used
/// for normalisation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaSchema {
    pub aetiologies: Vec<String>,
    pub points_of_entry: Vec<String>,
    pub year_range: (i32, i32),
}

impl MetaSchema {
    /// Alphabets are the sorted distinct values present in `records`.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a MetaRecord>) -> Result<Self> {
        let mut aetiologies = std::collections::BTreeSet::new();
        let mut points = std::collections::BTreeSet::new();
        let mut years: Option<(i32, i32)> = None;
        for r in records {
            aetiologies.insert(r.aetiology.clone());
            points.insert(r.point_of_entry.clone());
            years = Some(match years {
                None => (r.year, r.year),
                Some((lo, hi)) => (lo.min(r.year), hi.max(r.year)),
            });
        }
        let year_range =
            years.ok_or_else(|| Error::Dataset("no records to derive meta schema".into()))?;
        Ok(Self {
            aetiologies: aetiologies.into_iter().collect(),
            points_of_entry: points.into_iter().collect(),
            year_range,
        })
    }

    /// Width of [`MetaSchema::encode`]'s output.
    pub fn width(&self) -> usize {
        AgeGroup::ALL.len() + Gender::ALL.len() + self.aetiologies.len() + self.points_of_entry.len() + 7 + 1
    }

    fn one_hot(out: &mut Vec<f64>, size: usize, index: usize) {
        out.extend((0..size).map(|i| if i == index { 1.0 } else { 0.0 }));
    }

    /// One-hot blocks for age group, gender, aetiology, point of entry and
    /// weekday, then the year min-max normalised over `year_range`.
    pub fn encode(&self, meta: &MetaRecord) -> Result<Vec<f64>> {
        let aet = self
            .aetiologies
            .iter()
            .position(|a| *a == meta.aetiology)
            .ok_or_else(|| Error::UnknownCategory {
                field: "aetiology",
                value: meta.aetiology.clone(),
            })?;
        let poe = self
            .points_of_entry
            .iter()
            .position(|p| *p == meta.point_of_entry)
            .ok_or_else(|| Error::UnknownCategory {
                field: "point_of_entry",
                value: meta.point_of_entry.clone(),
            })?;
        if meta.weekday > 6 {
            return Err(Error::UnknownCategory {
                field: "weekday",
                value: meta.weekday.to_string(),
            });
        }
        let mut out = Vec::with_capacity(self.width());
        Self::one_hot(&mut out, 3, meta.age_group as usize);
        Self::one_hot(&mut out, 3, meta.gender as usize);
        Self::one_hot(&mut out, self.aetiologies.len(), aet);
        Self::one_hot(&mut out, self.points_of_entry.len(), poe);
        Self::one_hot(&mut out, 7, usize::from(meta.weekday));
        out.push(self.normalize_year(meta.year));
        Ok(out)
    }

    pub fn normalize_year(&self, year: i32) -> f64 {
        let (lo, hi) = self.year_range;
        if hi == lo {
            0.0
        } else {
            f64::from(year - lo) / f64::from(hi - lo)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(year: i32) -> MetaRecord {
        MetaRecord {
            age_group: AgeGroup::Adult,
            gender: Gender::Female,
            aetiology: "accidental".into(),
            point_of_entry: "oral".into(),
            weekday: 3,
            year,
        }
    }

    #[test]
    fn year_endpoints_normalize_to_unit_interval() {
        let records = [record(2001), record(2010), record(2019)];
        let schema = MetaSchema::from_records(&records).unwrap();
        assert_eq!(schema.normalize_year(2001), 0.0);
        assert_eq!(schema.normalize_year(2019), 1.0);
        let enc = schema.encode(&records[1]).unwrap();
        assert_eq!(enc.len(), schema.width());
        assert!((enc.last().unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_hot_layout() {
        let schema = MetaSchema::from_records(&[record(2001)]).unwrap();
        let enc = schema.encode(&record(2001)).unwrap();
        // adult, female, accidental, oral, weekday 3, year
        assert_eq!(
            enc,
            vec![0., 1., 0., 0., 1., 0., 1., 1., 0., 0., 0., 1., 0., 0., 0., 0.]
        );
    }

    #[test]
    fn unknown_category_is_rejected() {
        let schema = MetaSchema::from_records(&[record(2001)]).unwrap();
        let mut r = record(2001);
        r.aetiology = "suicidal".into();
        assert!(matches!(
            schema.encode(&r),
            Err(Error::UnknownCategory { field: "aetiology", .. })
        ));
        let mut r = record(2001);
        r.weekday = 7;
        assert!(schema.encode(&r).is_err());
    }

    #[test]
    fn meta_field_names_round_trip() {
        for f in MetaField::ALL {
            assert_eq!(f.name().parse::<MetaField>().unwrap(), f);
        }
        assert!("colour".parse::<MetaField>().is_err());
    }
}
