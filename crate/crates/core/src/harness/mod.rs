//! Metrics, model selection, Met Office ingestion and the experiment runners
//! that produce CSV/JSON reports.

mod cv;
mod experiment;
mod metoffice;
mod method;

pub use cv::{fold_assignment, grid_search_cv, holdout_search, log_grid, CvEntry, CvResult, GridSpec};
pub use experiment::{
    run_experiment, Aggregate, ExperimentConfig, ExperimentKind, ExperimentReport, ForecastConfig, ImageConfig,
    Selection, SynthConfig, TrialRecord,
};
pub use metoffice::{
    build_forecast_dataset, load_metoffice, parse_station, synthetic_station_files, ForecastDataset, MonthRecord, Normalizer, StationSeries,
    VARIABLES,
};
pub use method::{fit_method, Estimator, Fitted, Hyper, MethodSpec};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Entrywise root-mean-square difference.
pub fn rmse(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape().to_vec(),
            found: b.shape().to_vec(),
        });
    }
    let ss: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        let a = DenseTensor::from_fn(&[2, 3, 4], |ix| (ix[0] + 2 * ix[1] + ix[2]) as f64).unwrap();
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let z = DenseTensor::zeros(&[3, 5]).unwrap();
        let o = DenseTensor::from_fn(&[3, 5], |_| 1.0).unwrap();
        assert_eq!(rmse(&z, &o).unwrap(), 1.0);
        let b = a.scaled(0.5);
        assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
        assert!(rmse(&a, &z).is_err());
    }
}
