//! Synthetic dataset generation for benchmarks and end-to-end tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CategoricalGroup, FeatureSchema, LabeledDataset, NumericFeature, Sample};

/// Builds a binary-label dataset whose labels are strongly correlated with
/// one sensitive categorical group plus a weaker numeric signal and noise.
///
/// Layout: `num_numeric` standardized-looking numeric features, then a
/// sensitive group (`group` with categories a/b) and a second spurious
/// group (`region` with categories north/south/east).
pub fn biased_dataset(n: usize, num_numeric: usize, seed: u64) -> LabeledDataset {
    let numeric_features = (0..num_numeric)
        .map(|i| NumericFeature { name: format!("x{i}"), column: i })
        .collect::<Vec<_>>();
    let sensitive = CategoricalGroup {
        name: "group".into(),
        categories: vec!["a".into(), "b".into()],
        columns: vec![num_numeric, num_numeric + 1],
    };
    let region = CategoricalGroup {
        name: "region".into(),
        categories: vec!["north".into(), "south".into(), "east".into()],
        columns: vec![num_numeric + 2, num_numeric + 3, num_numeric + 4],
    };
    let schema = FeatureSchema {
        numeric_features,
        categorical_groups: vec![sensitive, region],
        label_name: "y".into(),
        label_values: vec!["neg".into(), "pos".into()],
        positive_label: Some(1),
    };
    let d = schema.dimension();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v = vec![0.0; d];
        for i in 0..num_numeric {
            // crude standard normal via sum of uniforms
            let s: f64 = (0..12).map(|_| rng.gen::<f64>()).sum::<f64>() - 6.0;
            v[i] = s;
        }
        let grp = rng.gen_range(0..2usize);
        v[num_numeric + grp] = 1.0;
        let reg = rng.gen_range(0..3usize);
        v[num_numeric + 2 + reg] = 1.0;

        // Label: dominated by group membership, nudged by the first numeric
        // feature, with 10% label noise.
        let score = if grp == 0 { 1.5 } else { -1.5 } + 0.5 * v[0];
        let mut label = usize::from(score > 0.0);
        if rng.gen::<f64>() < 0.10 {
            label = 1 - label;
        }
        samples.push(Sample::new(v));
        labels.push(label);
    }
    LabeledDataset { schema, samples, labels }
}

/// Like [`biased_dataset`], but the group only decides labels inside the
/// band `|x0| < band`; outside it the sign of `x0` does. A predictor that
/// ignores the group can therefore stay competitive on accuracy while a
/// group-driven one cannot be individually fair.
pub fn band_biased_dataset(n: usize, num_numeric: usize, band: f64, seed: u64) -> LabeledDataset {
    let mut ds = biased_dataset(n, num_numeric, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBA2D);
    let grp_a = ds.schema.categorical_groups[0].columns[0];
    for (s, label) in ds.samples.iter().zip(ds.labels.iter_mut()) {
        let x0 = s.values[0];
        let mut l = if x0.abs() < band {
            usize::from(s.values[grp_a] == 1.0)
        } else {
            usize::from(x0 > 0.0)
        };
        if rng.gen::<f64>() < 0.05 {
            l = 1 - l;
        }
        *label = l;
    }
    ds
}
