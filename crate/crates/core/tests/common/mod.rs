#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use savers_core::kernel::ConvSpec;
use savers_core::net::{CoarsePooling, SaversConfig};
use savers_core::regions::LabelMap;
use savers_core::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct cross-correlation: one loop per output element and kernel tap.
pub fn conv_oracle(input: &Tensor, kernels: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let f = kernels.shape()[0];
    let (kh, kw, s) = (spec.kernel_h, spec.kernel_w, spec.stride);
    let oh = (h + spec.pad_top + spec.pad_bottom - kh) / s + 1;
    let ow = (w + spec.pad_left + spec.pad_right - kw) / s + 1;
    let x = input.data();
    let k = kernels.data();
    let mut out = vec![0.0; f * oh * ow];
    for o in 0..f {
        for r in 0..oh {
            for col in 0..ow {
                let mut acc = bias.data()[o];
                for ch in 0..c {
                    for i in 0..kh {
                        for j in 0..kw {
                            let y = (r * s + i) as isize - spec.pad_top as isize;
                            let xx = (col * s + j) as isize - spec.pad_left as isize;
                            if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                continue;
                            }
                            let v = x[(ch * h + y as usize) * w + xx as usize];
                            acc += v * k[((o * c + ch) * kh + i) * kw + j];
                        }
                    }
                }
                out[(o * oh + r) * ow + col] = acc;
            }
        }
    }
    Tensor::new(vec![f, oh, ow], out).unwrap()
}

/// Components found by union-find over 8-neighbour links between equal
/// non-zero labels. Each entry is `(class, pixel count, centroid)`, in no
/// particular order.
pub fn union_find_components(map: &LabelMap) -> Vec<(usize, usize, (f64, f64))> {
    let (h, w) = map.shape();
    let mut parent: Vec<usize> = (0..h * w).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for r in 0..h {
        for c in 0..w {
            let v = map.get(r, c);
            if v == 0 {
                continue;
            }
            for (dr, dc) in [(0i64, 1i64), (1, -1), (1, 0), (1, 1)] {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                    continue;
                }
                if map.get(nr as usize, nc as usize) == v {
                    let a = find(&mut parent, r * w + c);
                    let b = find(&mut parent, nr as usize * w + nc as usize);
                    parent[a] = b;
                }
            }
        }
    }
    let mut acc: std::collections::BTreeMap<usize, (usize, usize, f64, f64)> = Default::default();
    for r in 0..h {
        for c in 0..w {
            if map.get(r, c) == 0 {
                continue;
            }
            let root = find(&mut parent, r * w + c);
            let e = acc.entry(root).or_insert((map.get(r, c), 0, 0.0, 0.0));
            e.1 += 1;
            e.2 += r as f64;
            e.3 += c as f64;
        }
    }
    acc.into_values()
        .map(|(class, n, sr, sc)| (class, n, (sr / n as f64, sc / n as f64)))
        .collect()
}

pub fn tiny_config(num_classes: usize) -> SaversConfig {
    SaversConfig {
        num_classes,
        block_channels: [2, 3, 3, 4],
        mid_channels: 4,
        dropout_rate: 0.5,
        input_channels: 1,
        coarse_pooling: CoarsePooling::Global,
    }
}

pub const MSTAR_NAMES: [&str; 11] = [
    "Background", "2S1", "BMP2", "BRDM2", "BTR60", "BTR70", "D7", "T62", "T72", "ZIL131", "ZSU234",
];

/// Published test confusion matrix, rows predicted, columns actual.
pub const PUBLISHED_CONFUSION: [[u64; 11]; 11] = [
    [242, 1, 0, 3, 3, 1, 11, 0, 0, 6, 1],
    [0, 272, 1, 1, 0, 1, 0, 1, 0, 0, 0],
    [0, 0, 194, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 268, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 185, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 194, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 263, 0, 0, 0, 0],
    [0, 1, 0, 0, 2, 0, 0, 269, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 1, 196, 0, 0],
    [0, 0, 0, 2, 0, 0, 0, 0, 0, 268, 0],
    [0, 0, 0, 0, 0, 0, 0, 2, 0, 0, 273],
];

/// Published per-class (precision, recall, F1) at three decimals.
pub const PUBLISHED_METRICS: [(f64, f64, f64); 11] = [
    (0.903, 1.000, 0.949),
    (0.986, 0.993, 0.989),
    (1.000, 0.995, 0.997),
    (1.000, 0.978, 0.989),
    (1.000, 0.974, 0.987),
    (1.000, 0.990, 0.995),
    (1.000, 0.960, 0.980),
    (0.989, 0.985, 0.987),
    (0.995, 1.000, 0.997),
    (0.993, 0.978, 0.985),
    (0.993, 0.996, 0.995),
];

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{i}")).collect()
}

pub fn mstar_names() -> Vec<String> {
    MSTAR_NAMES.iter().map(|s| s.to_string()).collect()
}
