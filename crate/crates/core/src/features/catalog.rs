use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{ChannelId, ChannelKind, Foot};

/// Bumped whenever names or order change; part of the checksum.
pub const CATALOG_VERSION: u32 = 1;

pub const TEMPORAL: [&str; 19] = [
    "mean",
    "median",
    "min",
    "max",
    "range",
    "rms",
    "mean_abs",
    "waveform_length",
    "avg_abs_dev",
    "slope_sign_changes",
    "zero_crossings",
    "peak_count",
    "mean_peak_interval",
    "time_to_peak",
    "time_to_min",
    "max_to_rms",
    "mean_to_max",
    "rms_to_mean",
    "last_minus_first",
];

pub const STATISTICAL: [&str; 16] = [
    "variance",
    "skewness",
    "kurtosis",
    "p10",
    "p25",
    "p75",
    "p90",
    "iqr",
    "median_abs_dev",
    "coef_variation",
    "energy",
    "hist_entropy",
    "autocorr_lag1",
    "hjorth_mobility",
    "hjorth_complexity",
    "trimmed_mean10",
];

pub const FREQUENCY: [&str; 12] = [
    "spectral_power",
    "spectral_entropy",
    "dominant_freq",
    "dominant_power",
    "dominant_ratio",
    "spectral_centroid",
    "spectral_spread",
    "band_0_2.5hz",
    "band_2.5_5hz",
    "band_5_10hz",
    "spectral_edge95",
    "spectral_flatness",
];

pub const PER_CHANNEL: usize = TEMPORAL.len() + STATISTICAL.len() + FREQUENCY.len();
pub const CROSS_FOOT: usize = 5;
pub const TRANSITION: usize = 6;
pub const CATALOG_LEN: usize = PER_CHANNEL * crate::model::NUM_CHANNELS + CROSS_FOOT + TRANSITION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureFamily {
    Temporal,
    Statistical,
    Frequency,
    CrossFoot,
    Transition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub family: FeatureFamily,
    /// Source channels the feature reads.
    pub channels: Vec<ChannelId>,
}

impl FeatureDef {
    pub fn uses_load(&self) -> bool {
        self.channels.iter().any(|c| c.kind == ChannelKind::Load)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCatalog {
    entries: Vec<FeatureDef>,
    checksum: String,
}

impl FeatureCatalog {
    /// The frozen 669-entry catalog.
    pub fn standard() -> &'static FeatureCatalog {
        static CATALOG: OnceLock<FeatureCatalog> = OnceLock::new();
        CATALOG.get_or_init(build)
    }

    pub fn entries(&self) -> &[FeatureDef] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// SHA-256 over the version and the ordered names.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    /// Indices of features that read no load-cell channel.
    pub fn without_load(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.entries[i].uses_load()).collect()
    }
}

fn build() -> FeatureCatalog {
    let mut entries = Vec::with_capacity(CATALOG_LEN);
    for ch in ChannelId::all() {
        let groups: [(&[&str], FeatureFamily); 3] = [
            (&TEMPORAL, FeatureFamily::Temporal),
            (&STATISTICAL, FeatureFamily::Statistical),
            (&FREQUENCY, FeatureFamily::Frequency),
        ];
        for (names, family) in groups {
            for n in names {
                entries.push(FeatureDef {
                    name: format!("{}_{}", ch.name(), n),
                    family,
                    channels: vec![ch],
                });
            }
        }
    }
    let both = |k: ChannelKind| vec![ChannelId::new(Foot::Left, k), ChannelId::new(Foot::Right, k)];
    let axes = |g: crate::model::SensorGroup| -> Vec<ChannelId> {
        Foot::BOTH
            .iter()
            .flat_map(|&f| g.axes().map(|k| ChannelId::new(f, k)))
            .collect()
    };
    use crate::model::SensorGroup;
    let cross = [
        ("xf_load_corr", both(ChannelKind::Load)),
        ("xf_az_corr", both(ChannelKind::AccZ)),
        ("xf_gyro_mag_corr", axes(SensorGroup::Gyro)),
        ("xf_acc_mag_product_mean", axes(SensorGroup::Acc)),
        ("xf_load_diff_mean", both(ChannelKind::Load)),
    ];
    for (name, channels) in cross {
        entries.push(FeatureDef {
            name: name.into(),
            family: FeatureFamily::CrossFoot,
            channels,
        });
    }
    for foot in Foot::BOTH {
        let p = foot.prefix();
        let az = ChannelId::new(foot, ChannelKind::AccZ);
        let load = ChannelId::new(foot, ChannelKind::Load);
        for (name, ch) in [
            (format!("tr_{p}_az_change"), az),
            (format!("tr_{p}_az_time_to_peak"), az),
            (format!("tr_{p}_load_time_to_peak"), load),
        ] {
            entries.push(FeatureDef {
                name,
                family: FeatureFamily::Transition,
                channels: vec![ch],
            });
        }
    }

    let mut h = Sha256::new();
    h.update(CATALOG_VERSION.to_le_bytes());
    for e in &entries {
        h.update(e.name.as_bytes());
        h.update(b"\n");
    }
    let checksum = hex::encode(h.finalize());
    FeatureCatalog { entries, checksum }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn catalog_shape_is_frozen() {
        let cat = FeatureCatalog::standard();
        assert_eq!(PER_CHANNEL, 47);
        assert_eq!(cat.len(), 669);
        assert_eq!(CATALOG_LEN, 669);
        let names: HashSet<_> = cat.names().collect();
        assert_eq!(names.len(), 669);
        let count = |f| cat.entries().iter().filter(|e| e.family == f).count();
        assert_eq!(count(FeatureFamily::Temporal), 19 * 14);
        assert_eq!(count(FeatureFamily::Statistical), 16 * 14);
        assert_eq!(count(FeatureFamily::Frequency), 12 * 14);
        assert_eq!(count(FeatureFamily::CrossFoot), 5);
        assert_eq!(count(FeatureFamily::Transition), 6);
        assert_eq!(cat.entries()[0].name, "L_load_mean");
        assert_eq!(cat.entries()[668].name, "tr_R_load_time_to_peak");
    }

    #[test]
    fn load_mask_excludes_every_load_feature() {
        let cat = FeatureCatalog::standard();
        let kept = cat.without_load();
        // 2 load channels x 47, two load cross-foot, two load transition
        assert_eq!(kept.len(), 669 - 94 - 2 - 2);
        assert!(kept.iter().all(|&i| !cat.entries()[i].name.contains("load")));
    }

    #[test]
    fn checksum_is_stable_hex() {
        let c = FeatureCatalog::standard().checksum();
        assert_eq!(c.len(), 64);
        assert_eq!(c, build().checksum);
    }
}
