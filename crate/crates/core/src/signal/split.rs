//! Stratified, seeded 80/10/10 dataset split.

use rand::seq::SliceRandom;

use super::{DatasetSplit, Label, Result, SampleWindow, SignalError};
use crate::rng::stream_rng;

const TRAIN_FRACTION: f64 = 0.8;
const VALIDATION_FRACTION: f64 = 0.1;
const MIN_PER_CLASS: usize = 10;

/// Splits windows 80/10/10 per class, preserving the preictal:interictal
/// ratio in every partition. Deterministic given the seed.
pub fn split_dataset(windows: Vec<SampleWindow>, seed: u64) -> Result<DatasetSplit> {
    let n_pre = windows.iter().filter(|w| w.label == Label::Preictal).count();
    let n_inter = windows.len() - n_pre;
    if n_pre < MIN_PER_CLASS || n_inter < MIN_PER_CLASS {
        return Err(SignalError::InsufficientData(format!(
            "need at least {MIN_PER_CLASS} windows per class, got {n_pre} preictal / {n_inter} interictal"
        )));
    }

    let mut rng = stream_rng(seed, "dataset-split");
    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();

    let mut by_class: [Vec<SampleWindow>; 2] = [Vec::new(), Vec::new()];
    for w in windows {
        by_class[usize::from(w.label == Label::Interictal)].push(w);
    }
    for class in by_class.iter_mut() {
        class.shuffle(&mut rng);
        let n = class.len();
        let n_train = (n as f64 * TRAIN_FRACTION).round() as usize;
        let n_val = (n as f64 * VALIDATION_FRACTION).round() as usize;
        for (i, w) in class.drain(..).enumerate() {
            if i < n_train {
                train.push(w);
            } else if i < n_train + n_val {
                validation.push(w);
            } else {
                test.push(w);
            }
        }
    }
    train.shuffle(&mut rng);
    validation.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok(DatasetSplit { train, validation, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_window(label: Label, tag: f64) -> SampleWindow {
        SampleWindow {
            start_time: tag,
            sample_rate_hz: 1,
            channels: vec![vec![0.0; 4]],
            label,
        }
    }

    fn mixed(n_pre: usize, n_inter: usize) -> Vec<SampleWindow> {
        let mut v = Vec::new();
        for i in 0..n_pre {
            v.push(tiny_window(Label::Preictal, i as f64));
        }
        for i in 0..n_inter {
            v.push(tiny_window(Label::Interictal, (n_pre + i) as f64));
        }
        v
    }

    #[test]
    fn thousand_windows_split_800_100_100() {
        let split = split_dataset(mixed(100, 900), 1).unwrap();
        assert_eq!(split.train.len(), 800);
        assert_eq!(split.validation.len(), 100);
        assert_eq!(split.test.len(), 100);
    }

    #[test]
    fn same_seed_same_split() {
        let a = split_dataset(mixed(50, 450), 9).unwrap();
        let b = split_dataset(mixed(50, 450), 9).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(mixed(50, 450), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stratification_puts_ten_preictal_in_test() {
        let split = split_dataset(mixed(100, 900), 3).unwrap();
        let pre_in_test =
            split.test.iter().filter(|w| w.label == Label::Preictal).count() as i64;
        assert!((pre_in_test - 10).abs() <= 1, "got {pre_in_test}");
    }

    #[test]
    fn too_few_of_one_class_errors() {
        assert!(matches!(
            split_dataset(mixed(9, 900), 0),
            Err(SignalError::InsufficientData(_))
        ));
    }

    #[test]
    fn splits_are_disjoint_and_cover() {
        let windows = mixed(20, 200);
        let split = split_dataset(windows.clone(), 4).unwrap();
        assert_eq!(split.total(), windows.len());
        // start_time doubles as a unique id here
        let mut seen: Vec<f64> = split
            .train
            .iter()
            .chain(&split.validation)
            .chain(&split.test)
            .map(|w| w.start_time)
            .collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expect: Vec<f64> = windows.iter().map(|w| w.start_time).collect();
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(seen, expect);
    }
}
