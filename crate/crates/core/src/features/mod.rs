//! Feature catalog, extraction, scaling and mRMR selection.

pub mod catalog;
pub mod extract;
pub mod mrmr;
pub mod scaler;

pub use catalog::{FeatureCatalog, FeatureDef, FeatureFamily, CATALOG_LEN};
pub use extract::FeatureExtractor;
pub use mrmr::{mrmr_select, SelectionResult};
pub use scaler::StandardScaler;

use std::path::Path;

use crate::error::{Error, Result};

/// Dumps a feature matrix with catalog names as header and a trailing
/// `label` column.
pub fn write_feature_csv(path: &Path, catalog: &FeatureCatalog, rows: &[Vec<f64>], labels: &[u8]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut header: Vec<String> = catalog.names().map(str::to_string).collect();
    header.push("label".into());
    let csv_err = |e: csv::Error| Error::Format {
        context: path.display().to_string(),
        message: e.to_string(),
    };
    w.write_record(&header).map_err(csv_err)?;
    for (r, l) in rows.iter().zip(labels) {
        let mut rec: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        rec.push(l.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
