//! Parameter storage, forward pass and hand-derived backward pass.
//!
//! Activation layout is channel-major: `[channels, time, feature]` per
//! sample. The three branch slabs are the feature-column pairs
//! (finger 0..2, eye 2..4, head 4..6) with the coordinate axis as
//! channels. Branch outputs are concatenated along the feature axis, so
//! the joint 2x2 convolutions see a (36, 6) spatial grid.

use super::{FusionError, NetworkConfig};
use ndarray::{s, Array1, Array2, Array3, Array4};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Per-(feature, coordinate) standardization constants, fit on the
/// training split. Direction features keep mean 0 / sd 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Normalization {
    pub fn identity(n_features: usize, dims: usize) -> Self {
        Self {
            mean: vec![0.0; n_features * dims],
            sd: vec![1.0; n_features * dims],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Every learnable tensor of the network. Shared by the model and its
/// gradients so there is exactly one flattening order (the checkpoint
/// blob order): per active branch w1, b1, w2, b2 (finger, eye, head),
/// then joint1 w, b, joint2 w, b, dense w, b.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    pub branches: [Option<BranchParams>; 3],
    pub joint1_w: Array4<f64>,
    pub joint1_b: Array1<f64>,
    pub joint2_w: Array4<f64>,
    pub joint2_b: Array1<f64>,
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
}

impl Tensors {
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        let f = cfg.feature_maps;
        let mk_branch = |active: bool| {
            active.then(|| BranchParams {
                w1: Array2::zeros((f, cfg.dims)),
                b1: Array1::zeros(f),
                w2: Array2::zeros((f, f)),
                b2: Array1::zeros(f),
            })
        };
        Self {
            branches: [
                mk_branch(cfg.active_modalities[0]),
                mk_branch(cfg.active_modalities[1]),
                mk_branch(cfg.active_modalities[2]),
            ],
            joint1_w: Array4::zeros((f, f, 2, 2)),
            joint1_b: Array1::zeros(f),
            joint2_w: Array4::zeros((f, f, 2, 2)),
            joint2_b: Array1::zeros(f),
            dense_w: Array2::zeros((cfg.output_dim, cfg.flat_len())),
            dense_b: Array1::zeros(cfg.output_dim),
        }
    }

    /// Names and lengths of the tensors in flattening order.
    pub fn layout(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for (m, b) in self.branches.iter().enumerate() {
            if let Some(b) = b {
                out.push((format!("branch{m}.w1"), b.w1.len()));
                out.push((format!("branch{m}.b1"), b.b1.len()));
                out.push((format!("branch{m}.w2"), b.w2.len()));
                out.push((format!("branch{m}.b2"), b.b2.len()));
            }
        }
        out.push(("joint1.w".into(), self.joint1_w.len()));
        out.push(("joint1.b".into(), self.joint1_b.len()));
        out.push(("joint2.w".into(), self.joint2_w.len()));
        out.push(("joint2.b".into(), self.joint2_b.len()));
        out.push(("dense.w".into(), self.dense_w.len()));
        out.push(("dense.b".into(), self.dense_b.len()));
        out
    }

    pub fn n_params(&self) -> usize {
        self.layout().iter().map(|(_, n)| n).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        self.for_each_slice(|s| out.extend_from_slice(s));
        out
    }

    pub fn from_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        self.for_each_slice_mut(|s| {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        });
        assert_eq!(off, flat.len());
    }

    fn for_each_slice(&self, mut f: impl FnMut(&[f64])) {
        for b in self.branches.iter().flatten() {
            f(b.w1.as_slice().unwrap());
            f(b.b1.as_slice().unwrap());
            f(b.w2.as_slice().unwrap());
            f(b.b2.as_slice().unwrap());
        }
        f(self.joint1_w.as_slice().unwrap());
        f(self.joint1_b.as_slice().unwrap());
        f(self.joint2_w.as_slice().unwrap());
        f(self.joint2_b.as_slice().unwrap());
        f(self.dense_w.as_slice().unwrap());
        f(self.dense_b.as_slice().unwrap());
    }

    fn for_each_slice_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for b in self.branches.iter_mut().flatten() {
            f(b.w1.as_slice_mut().unwrap());
            f(b.b1.as_slice_mut().unwrap());
            f(b.w2.as_slice_mut().unwrap());
            f(b.b2.as_slice_mut().unwrap());
        }
        f(self.joint1_w.as_slice_mut().unwrap());
        f(self.joint1_b.as_slice_mut().unwrap());
        f(self.joint2_w.as_slice_mut().unwrap());
        f(self.joint2_b.as_slice_mut().unwrap());
        f(self.dense_w.as_slice_mut().unwrap());
        f(self.dense_b.as_slice_mut().unwrap());
    }

    pub fn add_assign(&mut self, other: &Tensors) {
        let o = other.to_flat();
        let mut off = 0;
        self.for_each_slice_mut(|s| {
            let n = s.len();
            for (a, b) in s.iter_mut().zip(&o[off..off + n]) {
                *a += b;
            }
            off += n;
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub cfg: NetworkConfig,
    pub params: Tensors,
    pub norm: Normalization,
}

/// He-scaled normal init for the convolutional layers, small uniform
/// for the dense head, zero biases.
pub fn weight_init(cfg: &NetworkConfig, seed: u64) -> FusionModel {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut params = Tensors::zeros(cfg);
    let he = |fan_in: usize| Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
    for b in params.branches.iter_mut().flatten() {
        let d1 = he(cfg.dims);
        b.w1.mapv_inplace(|_| d1.sample(&mut rng));
        let d2 = he(cfg.feature_maps);
        b.w2.mapv_inplace(|_| d2.sample(&mut rng));
    }
    let dj = he(cfg.feature_maps * 4);
    params.joint1_w.mapv_inplace(|_| dj.sample(&mut rng));
    params.joint2_w.mapv_inplace(|_| dj.sample(&mut rng));
    let bound = 1.0 / (cfg.flat_len() as f64).sqrt();
    let du = Uniform::new(-bound, bound).unwrap();
    params.dense_w.mapv_inplace(|_| du.sample(&mut rng));
    FusionModel {
        cfg: cfg.clone(),
        params,
        norm: Normalization::identity(cfg.concat_features(), cfg.dims),
    }
}

/// Forward intermediates for one sample, kept for the backward pass.
/// All activation arrays are post-ReLU.
pub struct Cache {
    slabs: [Array3<f64>; 3],
    a1: [Option<Array3<f64>>; 3],
    a2: [Option<Array3<f64>>; 3],
    concat: Array3<f64>,
    j1: Array3<f64>,
    j2: Array3<f64>,
}

fn conv1x1(w: &Array2<f64>, b: &Array1<f64>, x: &Array3<f64>) -> Array3<f64> {
    let (out_c, in_c) = w.dim();
    let (_, h, wid) = x.dim();
    let mut y = Array3::zeros((out_c, h, wid));
    for o in 0..out_c {
        let mut plane = y.slice_mut(s![o, .., ..]);
        plane.fill(b[o]);
        for i in 0..in_c {
            let wv = w[[o, i]];
            plane.zip_mut_with(&x.slice(s![i, .., ..]), |p, &xv| *p += wv * xv);
        }
        plane.mapv_inplace(|v| v.max(0.0));
    }
    y
}

fn conv1x1_backward(
    w: &Array2<f64>,
    x: &Array3<f64>,
    y: &Array3<f64>,
    dy: &Array3<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array1<f64>,
) -> Array3<f64> {
    let (out_c, in_c) = w.dim();
    let (_, h, wid) = x.dim();
    // ReLU mask folded into dy.
    let mut dyr = dy.clone();
    dyr.zip_mut_with(y, |g, &act| {
        if act <= 0.0 {
            *g = 0.0;
        }
    });
    let mut dx = Array3::zeros((in_c, h, wid));
    for o in 0..out_c {
        let g = dyr.slice(s![o, .., ..]);
        db[o] += g.sum();
        for i in 0..in_c {
            let xi = x.slice(s![i, .., ..]);
            dw[[o, i]] += g.iter().zip(xi.iter()).map(|(a, b)| a * b).sum::<f64>();
            let wv = w[[o, i]];
            dx.slice_mut(s![i, .., ..])
                .zip_mut_with(&g, |d, &gv| *d += wv * gv);
        }
    }
    dx
}

fn conv2x2(w: &Array4<f64>, b: &Array1<f64>, x: &Array3<f64>) -> Array3<f64> {
    let (out_c, in_c, _, _) = w.dim();
    let (_, h, wid) = x.dim();
    let (oh, ow) = (h - 1, wid - 1);
    let mut y = Array3::zeros((out_c, oh, ow));
    for o in 0..out_c {
        for i in 0..in_c {
            let xi = x.slice(s![i, .., ..]);
            for dy_ in 0..2 {
                for dx_ in 0..2 {
                    let wv = w[[o, i, dy_, dx_]];
                    let shifted = xi.slice(s![dy_..dy_ + oh, dx_..dx_ + ow]);
                    y.slice_mut(s![o, .., ..])
                        .zip_mut_with(&shifted, |p, &xv| *p += wv * xv);
                }
            }
        }
        let bias = b[o];
        y.slice_mut(s![o, .., ..])
            .mapv_inplace(|v: f64| (v + bias).max(0.0));
    }
    y
}

fn conv2x2_backward(
    w: &Array4<f64>,
    x: &Array3<f64>,
    y: &Array3<f64>,
    dy: &Array3<f64>,
    dw: &mut Array4<f64>,
    db: &mut Array1<f64>,
) -> Array3<f64> {
    let (out_c, in_c, _, _) = w.dim();
    let (_, h, wid) = x.dim();
    let (oh, ow) = (h - 1, wid - 1);
    let mut dyr = dy.clone();
    dyr.zip_mut_with(y, |g, &act| {
        if act <= 0.0 {
            *g = 0.0;
        }
    });
    let mut dx = Array3::zeros((in_c, h, wid));
    for o in 0..out_c {
        let g = dyr.slice(s![o, .., ..]);
        db[o] += g.sum();
        for i in 0..in_c {
            let xi = x.slice(s![i, .., ..]);
            for dy_ in 0..2 {
                for dx_ in 0..2 {
                    let shifted = xi.slice(s![dy_..dy_ + oh, dx_..dx_ + ow]);
                    dw[[o, i, dy_, dx_]] +=
                        g.iter().zip(shifted.iter()).map(|(a, b)| a * b).sum::<f64>();
                    let wv = w[[o, i, dy_, dx_]];
                    dx.slice_mut(s![i, dy_..dy_ + oh, dx_..dx_ + ow])
                        .zip_mut_with(&g, |d, &gv| *d += wv * gv);
                }
            }
        }
    }
    dx
}

impl FusionModel {
    /// Standardizes one raw sample tensor (t, f, d) into the channel-major
    /// (d, t, f) layout the network consumes.
    pub fn prepare_input(&self, values: &Array3<f64>) -> Result<Array3<f64>, FusionError> {
        let want = [self.cfg.frames, self.cfg.concat_features(), self.cfg.dims];
        if values.shape() != want {
            return Err(FusionError::ShapeMismatch {
                got: values.shape().to_vec(),
                want: want.to_vec(),
            });
        }
        let mut x = Array3::zeros((self.cfg.dims, self.cfg.frames, self.cfg.concat_features()));
        for t in 0..self.cfg.frames {
            for f in 0..self.cfg.concat_features() {
                for d in 0..self.cfg.dims {
                    let k = f * self.cfg.dims + d;
                    x[[d, t, f]] = (values[[t, f, d]] - self.norm.mean[k]) / self.norm.sd[k];
                }
            }
        }
        Ok(x)
    }

    /// Forward pass for one prepared sample; returns the regressed
    /// vector (not normalized) and the cache for backprop.
    pub fn forward_sample(&self, x: &Array3<f64>) -> (Array1<f64>, Cache) {
        let cfg = &self.cfg;
        let bf = cfg.branch_features;
        let mut slabs: Vec<Array3<f64>> = Vec::with_capacity(3);
        let mut a1: [Option<Array3<f64>>; 3] = [None, None, None];
        let mut a2: [Option<Array3<f64>>; 3] = [None, None, None];
        let mut concat = Array3::zeros((cfg.feature_maps, cfg.frames, cfg.concat_features()));
        for m in 0..3 {
            let slab = x.slice(s![.., .., m * bf..(m + 1) * bf]).to_owned();
            if let Some(bp) = &self.params.branches[m] {
                let h1 = conv1x1(&bp.w1, &bp.b1, &slab);
                let h2 = conv1x1(&bp.w2, &bp.b2, &h1);
                concat
                    .slice_mut(s![.., .., m * bf..(m + 1) * bf])
                    .assign(&h2);
                a1[m] = Some(h1);
                a2[m] = Some(h2);
            }
            slabs.push(slab);
        }
        let j1 = conv2x2(&self.params.joint1_w, &self.params.joint1_b, &concat);
        let j2 = conv2x2(&self.params.joint2_w, &self.params.joint2_b, &j1);
        let flat = j2.as_slice().unwrap();
        let mut pred = self.params.dense_b.clone();
        for (k, p) in pred.iter_mut().enumerate() {
            *p += self
                .params
                .dense_w
                .row(k)
                .iter()
                .zip(flat)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
        let slabs: [Array3<f64>; 3] = slabs.try_into().unwrap();
        (
            pred,
            Cache {
                slabs,
                a1,
                a2,
                concat,
                j1,
                j2,
            },
        )
    }

    /// Backward pass for one sample, accumulating into `grads`.
    pub fn backward_sample(&self, cache: &Cache, dpred: &Array1<f64>, grads: &mut Tensors) {
        let cfg = &self.cfg;
        let bf = cfg.branch_features;
        let flat = cache.j2.as_slice().unwrap();
        let mut dflat = vec![0.0; flat.len()];
        for k in 0..cfg.output_dim {
            let g = dpred[k];
            grads.dense_b[k] += g;
            let wrow = self.params.dense_w.row(k);
            let growrow = grads.dense_w.row_mut(k);
            let grow = growrow.into_slice().unwrap();
            for (j, (&xv, &wv)) in flat.iter().zip(wrow.iter()).enumerate() {
                grow[j] += g * xv;
                dflat[j] += g * wv;
            }
        }
        let dj2 = Array3::from_shape_vec(cache.j2.dim(), dflat).unwrap();
        let dj1 = conv2x2_backward(
            &self.params.joint2_w,
            &cache.j1,
            &cache.j2,
            &dj2,
            &mut grads.joint2_w,
            &mut grads.joint2_b,
        );
        let dconcat = conv2x2_backward(
            &self.params.joint1_w,
            &cache.concat,
            &cache.j1,
            &dj1,
            &mut grads.joint1_w,
            &mut grads.joint1_b,
        );
        for m in 0..3 {
            let (Some(bp), Some(gb)) = (&self.params.branches[m], grads.branches[m].as_mut())
            else {
                continue;
            };
            let dh2 = dconcat.slice(s![.., .., m * bf..(m + 1) * bf]).to_owned();
            let h1 = cache.a1[m].as_ref().unwrap();
            let h2 = cache.a2[m].as_ref().unwrap();
            let dh1 = conv1x1_backward(&bp.w2, h1, h2, &dh2, &mut gb.w2, &mut gb.b2);
            conv1x1_backward(&bp.w1, &cache.slabs[m], h1, &dh1, &mut gb.w1, &mut gb.b1);
        }
    }

    /// Batched forward over raw sample tensors; rows of the result are
    /// the regressed vectors.
    pub fn forward_batch(&self, samples: &[&Array3<f64>]) -> Result<Array2<f64>, FusionError> {
        let inputs: Vec<Array3<f64>> = samples
            .iter()
            .map(|v| self.prepare_input(v))
            .collect::<Result<_, _>>()?;
        let preds: Vec<Array1<f64>> = inputs
            .par_iter()
            .map(|x| self.forward_sample(x).0)
            .collect();
        let mut out = Array2::zeros((samples.len(), self.cfg.output_dim));
        for (i, p) in preds.iter().enumerate() {
            out.row_mut(i).assign(p);
        }
        Ok(out)
    }

    /// Forward + backward for a batch of prepared inputs. Per-sample
    /// work runs in parallel; gradients are summed in sample order so
    /// the result is deterministic.
    pub fn forward_backward_batch(
        &self,
        inputs: &[Array3<f64>],
        truth: &Array2<f64>,
    ) -> Result<(f64, Tensors), FusionError> {
        let results: Vec<(Array1<f64>, Cache)> = inputs
            .par_iter()
            .map(|x| self.forward_sample(x))
            .collect();
        let mut preds = Array2::zeros((inputs.len(), self.cfg.output_dim));
        for (i, (p, _)) in results.iter().enumerate() {
            preds.row_mut(i).assign(p);
        }
        let (loss, dpred) = super::loss::mad_loss_and_grad(&preds, truth)?;
        let grads: Vec<Tensors> = results
            .par_iter()
            .enumerate()
            .map(|(i, (_, cache))| {
                let mut g = Tensors::zeros(&self.cfg);
                let row = dpred.row(i).to_owned();
                self.backward_sample(cache, &row, &mut g);
                g
            })
            .collect();
        let mut total = Tensors::zeros(&self.cfg);
        for g in &grads {
            total.add_assign(g);
        }
        Ok((loss, total))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array3 as A3;

    fn small_cfg() -> NetworkConfig {
        NetworkConfig::default().with_feature_maps(4)
    }

    fn random_values(seed: u64, cfg: &NetworkConfig) -> A3<f64> {
        let mut r = ChaCha20Rng::seed_from_u64(seed);
        let mut v = A3::zeros((cfg.frames, cfg.concat_features(), cfg.dims));
        v.mapv_inplace(|_| r.random_range(-1.0..1.0));
        v
    }

    #[test]
    fn zero_weights_zero_output() {
        let cfg = small_cfg();
        let model = FusionModel {
            cfg: cfg.clone(),
            params: Tensors::zeros(&cfg),
            norm: Normalization::identity(cfg.concat_features(), cfg.dims),
        };
        let v = random_values(1, &cfg);
        let x = model.prepare_input(&v).unwrap();
        let (pred, _) = model.forward_sample(&x);
        assert!(pred.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn identical_samples_identical_outputs() {
        let cfg = small_cfg();
        let model = weight_init(&cfg, 42);
        let v = random_values(2, &cfg);
        let batch = model.forward_batch(&[&v, &v, &v]).unwrap();
        for i in 1..3 {
            for k in 0..3 {
                assert_eq!(batch[[0, k]], batch[[i, k]]);
            }
        }
    }

    #[test]
    fn batch_is_permutation_equivariant() {
        let cfg = small_cfg();
        let model = weight_init(&cfg, 43);
        let a = random_values(3, &cfg);
        let b = random_values(4, &cfg);
        let ab = model.forward_batch(&[&a, &b]).unwrap();
        let ba = model.forward_batch(&[&b, &a]).unwrap();
        for k in 0..3 {
            assert_eq!(ab[[0, k]], ba[[1, k]]);
            assert_eq!(ab[[1, k]], ba[[0, k]]);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let cfg = small_cfg();
        let model = weight_init(&cfg, 1);
        let bad = A3::zeros((10, 6, 3));
        assert!(matches!(
            model.prepare_input(&bad),
            Err(FusionError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn seeded_init_reproducible_and_bias_zero() {
        let cfg = small_cfg();
        let a = weight_init(&cfg, 9);
        let b = weight_init(&cfg, 9);
        assert_eq!(a.params.to_flat(), b.params.to_flat());
        assert!(a.params.joint1_b.iter().all(|&v| v == 0.0));
        assert!(a.params.dense_b.iter().all(|&v| v == 0.0));
        let c = weight_init(&cfg, 10);
        assert_ne!(a.params.to_flat(), c.params.to_flat());
    }

    #[test]
    fn he_init_variance_close_to_two_over_fan_in() {
        let cfg = NetworkConfig::default(); // 128 maps
        let model = weight_init(&cfg, 123);
        let w = &model.params.joint1_w;
        let mean: f64 = w.iter().sum::<f64>() / w.len() as f64;
        let var: f64 = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w.len() as f64;
        let expect = 2.0 / (cfg.feature_maps * 4) as f64;
        assert!((var - expect).abs() / expect < 0.2, "var {var} vs {expect}");
    }

    /// Independent scalar-loop oracle: recompute the whole graph with
    /// plain nested loops and no ndarray slicing tricks.
    #[test]
    fn forward_matches_scalar_oracle() {
        let cfg = small_cfg();
        let model = weight_init(&cfg, 7);
        let v = random_values(5, &cfg);
        let x = model.prepare_input(&v).unwrap();
        let (pred, _) = model.forward_sample(&x);

        let f = cfg.feature_maps;
        let (t, w_all, d) = (cfg.frames, cfg.concat_features(), cfg.dims);
        // Branch stacks.
        let mut concat = vec![0.0; f * t * w_all];
        let idx3 = |c: usize, y: usize, xx: usize, h: usize, w: usize| (c * h + y) * w + xx;
        for m in 0..3 {
            let bp = model.params.branches[m].as_ref().unwrap();
            let mut h1 = vec![0.0; f * t * 2];
            for o in 0..f {
                for y in 0..t {
                    for xx in 0..2 {
                        let mut acc = bp.b1[o];
                        for i in 0..d {
                            acc += bp.w1[[o, i]] * x[[i, y, m * 2 + xx]];
                        }
                        h1[idx3(o, y, xx, t, 2)] = acc.max(0.0);
                    }
                }
            }
            for o in 0..f {
                for y in 0..t {
                    for xx in 0..2 {
                        let mut acc = bp.b2[o];
                        for i in 0..f {
                            acc += bp.w2[[o, i]] * h1[idx3(i, y, xx, t, 2)];
                        }
                        concat[idx3(o, y, m * 2 + xx, t, w_all)] = acc.max(0.0);
                    }
                }
            }
        }
        // Joint convs.
        let conv = |w4: &Array4<f64>, b: &Array1<f64>, input: &[f64], h: usize, wd: usize| {
            let (oh, ow) = (h - 1, wd - 1);
            let mut out = vec![0.0; f * oh * ow];
            for o in 0..f {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = b[o];
                        for i in 0..f {
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    acc += w4[[o, i, dy, dx]]
                                        * input[idx3(i, y + dy, xx + dx, h, wd)];
                                }
                            }
                        }
                        out[idx3(o, y, xx, oh, ow)] = acc.max(0.0);
                    }
                }
            }
            out
        };
        let j1 = conv(&model.params.joint1_w, &model.params.joint1_b, &concat, t, w_all);
        let j2 = conv(&model.params.joint2_w, &model.params.joint2_b, &j1, t - 1, w_all - 1);
        for k in 0..cfg.output_dim {
            let mut acc = model.params.dense_b[k];
            for (j, &xv) in j2.iter().enumerate() {
                acc += model.params.dense_w[[k, j]] * xv;
            }
            assert_abs_diff_eq!(pred[k], acc, epsilon = 1e-10);
        }
    }

    #[test]
    fn flat_round_trip() {
        let cfg = small_cfg();
        let model = weight_init(&cfg, 55);
        let flat = model.params.to_flat();
        let mut other = Tensors::zeros(&cfg);
        other.from_flat(&flat);
        assert_eq!(other, model.params);
        let total: usize = model.params.layout().iter().map(|(_, n)| n).sum();
        assert_eq!(total, flat.len());
    }

    #[test]
    fn inactive_branches_have_no_params_and_zero_contribution() {
        let cfg = small_cfg().with_modalities([false, true, false]);
        let model = weight_init(&cfg, 3);
        assert!(model.params.branches[0].is_none());
        assert!(model.params.branches[2].is_none());
        // Changing finger/head inputs does not move the output.
        let mut v = random_values(6, &cfg);
        let x1 = model.prepare_input(&v).unwrap();
        let (p1, _) = model.forward_sample(&x1);
        for t in 0..cfg.frames {
            for feat in [0usize, 1, 4, 5] {
                for dd in 0..3 {
                    v[[t, feat, dd]] += 10.0;
                }
            }
        }
        let x2 = model.prepare_input(&v).unwrap();
        let (p2, _) = model.forward_sample(&x2);
        for k in 0..3 {
            assert_eq!(p1[k], p2[k]);
        }
    }
}
