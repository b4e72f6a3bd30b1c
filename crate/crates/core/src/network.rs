//! The sequence-to-sequence box model.
//!
//! A sample's `N` point clouds pass through a coarse PointNet stage (current
//! box estimate plus per-point foreground logits), a shared set-abstraction
//! backbone, local (per-frame) and global (cross-frame) attention encoders,
//! and a decoder whose queries are the timestamped corners of the history
//! boxes and the coarse box. A flattened MLP head maps each box's corner
//! embeddings back to `(x, y, z, theta)`.

use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SeqSample;
use crate::error::{Error, Result};
use crate::geometry::NUM_CORNERS;
use crate::graph::{Graph, ParamStore, Var};
use crate::nn::{Activation, DecoderLayer, Encoder, LayerNorm, Linear, Mlp};
use crate::tensor::Tensor;

/// Which optional parts of the model are active. The coarse stage is always
/// present; with everything off the model outputs the history boxes followed
/// by the coarse box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Components {
    pub local: bool,
    pub global: bool,
    pub decoder: bool,
}

impl Default for Components {
    fn default() -> Self {
        Components::FULL
    }
}

impl Components {
    pub const FULL: Components = Components {
        local: true,
        global: true,
        decoder: true,
    };
    pub const COARSE_ONLY: Components = Components {
        local: false,
        global: false,
        decoder: false,
    };

    /// Parses ablation labels such as `C`, `C+G+D`, `C+L+D`, `C+L+G+D`.
    pub fn from_label(label: &str) -> Result<Self> {
        let mut c = Components::COARSE_ONLY;
        let mut parts = label.split('+').map(str::trim);
        if parts.next() != Some("C") {
            return Err(Error::Config(format!("component label {label:?} must start with C")));
        }
        for p in parts {
            match p {
                "L" => c.local = true,
                "G" => c.global = true,
                "D" => c.decoder = true,
                other => return Err(Error::Config(format!("unknown component {other:?} in {label:?}"))),
            }
        }
        Ok(c)
    }

    pub fn label(&self) -> String {
        let mut s = String::from("C");
        for (on, tag) in [(self.local, "+L"), (self.global, "+G"), (self.decoder, "+D")] {
            if on {
                s.push_str(tag);
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Window length `N`.
    pub n_frames: usize,
    /// Points per frame `W`.
    pub points_per_frame: usize,
    /// Backbone feature points per frame `M`.
    pub feature_points: usize,
    /// Encoder width `C`.
    pub channels: usize,
    /// Token width `C'`.
    pub token_channels: usize,
    /// Corners per box `L`.
    pub corners: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub dropout: f64,
    pub ffn_hidden: usize,
    /// Centroids of the first set-abstraction level.
    pub sa_centroids: usize,
    pub sa_radii: [f64; 2],
    pub sa_neighbors: [usize; 2],
    pub activation: Activation,
    pub components: Components,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_frames: 4,
            points_per_frame: 128,
            feature_points: 32,
            channels: 128,
            token_channels: 128,
            corners: NUM_CORNERS,
            heads: 4,
            encoder_layers: 3,
            decoder_layers: 3,
            dropout: 0.1,
            ffn_hidden: 256,
            sa_centroids: 64,
            sa_radii: [0.3, 0.6],
            sa_neighbors: [16, 16],
            activation: Activation::Relu,
            components: Components::FULL,
        }
    }
}

impl ModelConfig {
    /// The smallest useful configuration, sized for gradient checks.
    pub fn micro() -> Self {
        ModelConfig {
            n_frames: 2,
            points_per_frame: 8,
            feature_points: 4,
            channels: 8,
            token_channels: 8,
            heads: 2,
            encoder_layers: 1,
            decoder_layers: 1,
            dropout: 0.0,
            ffn_hidden: 16,
            sa_centroids: 6,
            sa_radii: [0.5, 1.0],
            sa_neighbors: [4, 4],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let counts = [
            ("n_frames", self.n_frames),
            ("points_per_frame", self.points_per_frame),
            ("feature_points", self.feature_points),
            ("channels", self.channels),
            ("token_channels", self.token_channels),
            ("heads", self.heads),
            ("ffn_hidden", self.ffn_hidden),
            ("sa_centroids", self.sa_centroids),
            ("sa_neighbors[0]", self.sa_neighbors[0]),
            ("sa_neighbors[1]", self.sa_neighbors[1]),
        ];
        for (name, v) in counts {
            if v == 0 {
                return bad(format!("model.{name} must be positive"));
            }
        }
        if self.corners != NUM_CORNERS {
            return bad(format!("model.corners must be {NUM_CORNERS}, got {}", self.corners));
        }
        if self.channels % self.heads != 0 || self.token_channels % self.heads != 0 {
            return bad(format!(
                "channel widths {} and {} must be divisible by {} heads",
                self.channels, self.token_channels, self.heads
            ));
        }
        if self.sa_centroids < self.feature_points || self.sa_centroids > self.points_per_frame {
            return bad(format!(
                "model.sa_centroids must lie in [feature_points, points_per_frame] = [{}, {}]",
                self.feature_points, self.points_per_frame
            ));
        }
        if self.sa_radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("model.sa_radii must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("model.dropout must lie in [0, 1), got {}", self.dropout));
        }
        let c = self.components;
        if c.decoder && !(c.local || c.global) {
            return bad("the decoder needs at least one encoder".into());
        }
        if (c.local || c.global) && !c.decoder {
            return bad("encoders need the decoder to consume their features".into());
        }
        if (c.local || c.global) && self.encoder_layers == 0 {
            return bad("model.encoder_layers must be positive".into());
        }
        if c.decoder && self.decoder_layers == 0 {
            return bad("model.decoder_layers must be positive".into());
        }
        Ok(())
    }

    fn level1_width(&self) -> usize {
        (self.channels / 2).max(1)
    }
}

/// Lexicographic order on coordinates.
fn lex(a: &[f64; 3], b: &[f64; 3]) -> Ordering {
    a[0].total_cmp(&b[0])
        .then(a[1].total_cmp(&b[1]))
        .then(a[2].total_cmp(&b[2]))
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Farthest point sampling of `count` indices. Starts at the point farthest
/// from the centroid; ties go to the lexicographically smallest point, which
/// makes the selected coordinates independent of input order.
pub fn farthest_point_sample(points: &[[f64; 3]], count: usize) -> Vec<usize> {
    let n = points.len();
    assert!(count <= n && n > 0, "cannot sample {count} of {n} points");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex(&points[a], &points[b]));
    let mut mean = [0.0; 3];
    for &i in &order {
        for k in 0..3 {
            mean[k] += points[i][k];
        }
    }
    let mean = mean.map(|v| v / n as f64);
    let pick = |score: &dyn Fn(usize) -> f64| -> usize {
        let mut best = order[0];
        for &i in &order[1..] {
            if score(i) > score(best) {
                best = i;
            }
        }
        best
    };
    let mut chosen = Vec::with_capacity(count);
    let first = pick(&|i| dist2(&points[i], &mean));
    chosen.push(first);
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &points[first])).collect();
    while chosen.len() < count {
        let next = pick(&|i| nearest[i]);
        chosen.push(next);
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(dist2(p, &points[next]));
        }
    }
    chosen
}

/// `k` neighbor indices per center: points within `radius`, nearest first
/// (ties by coordinates), padded by repeating the nearest point.
pub fn ball_query(points: &[[f64; 3]], centers: &[[f64; 3]], radius: f64, k: usize) -> Vec<usize> {
    let r2 = radius * radius;
    let mut out = Vec::with_capacity(centers.len() * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(points.len());
    for c in centers {
        cand.clear();
        cand.extend(points.iter().enumerate().map(|(i, p)| (dist2(p, c), i)));
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(lex(&points[a.1], &points[b.1])));
        let within = cand.iter().take_while(|(d, _)| *d <= r2).take(k).count().max(1);
        for j in 0..k {
            out.push(cand[if j < within { j } else { 0 }].1);
        }
    }
    out
}

#[derive(Clone, Debug)]
struct CoarseStage {
    point_mlp: Mlp,
    mask_head: Mlp,
    box_head: Mlp,
}

#[derive(Clone, Debug)]
struct Backbone {
    level1: Mlp,
    level2: Mlp,
}

#[derive(Clone, Debug)]
struct DecoderStack {
    embed: Linear,
    layers: Vec<DecoderLayer>,
    norm: LayerNorm,
    head: Mlp,
}

/// Graph handles of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `1×4` coarse current box `(x, y, z, theta)`.
    pub coarse: Var,
    /// `NW×1` foreground logits, frame-major.
    pub mask_logits: Var,
    /// `N×4` refined boxes, oldest first.
    pub boxes: Var,
    pub features: Option<Var>,
    pub local: Option<Var>,
    pub global: Option<Var>,
    pub fused: Option<Var>,
    pub tokens: Option<Var>,
    pub embedding: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Network {
    config: ModelConfig,
    params: ParamStore,
    coarse: CoarseStage,
    backbone: Option<Backbone>,
    local: Option<Encoder>,
    global: Option<Encoder>,
    decoder: Option<DecoderStack>,
}

impl Network {
    /// Builds a network with parameters initialized from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = config.channels;
        let cp = config.token_channels;
        let act = config.activation;
        let half = (c / 2).max(1);
        let coarse = CoarseStage {
            point_mlp: Mlp::new(&mut store, "coarse.point_mlp", &[5, c, c], act, &mut rng),
            mask_head: Mlp::new(&mut store, "coarse.mask_head", &[c, half, 1], act, &mut rng),
            box_head: Mlp::new(&mut store, "coarse.box_head", &[c, c, 4], act, &mut rng),
        };
        let comps = config.components;
        let uses_features = comps.local || comps.global;
        let backbone = uses_features.then(|| {
            let c1 = config.level1_width();
            Backbone {
                level1: Mlp::new(&mut store, "backbone.level1", &[8, c1, c1], act, &mut rng),
                level2: Mlp::new(&mut store, "backbone.level2", &[6 + c1, c, c], act, &mut rng),
            }
        });
        let encoder = |store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str| {
            Encoder::new(store, name, config.encoder_layers, c, config.heads, config.ffn_hidden, act, rng)
        };
        let local = comps.local.then(|| encoder(&mut store, &mut rng, "local_encoder"));
        let global = comps.global.then(|| encoder(&mut store, &mut rng, "global_encoder"));
        let decoder = comps.decoder.then(|| DecoderStack {
            embed: Linear::new(&mut store, "decoder.embed", 4, cp, &mut rng),
            layers: (0..config.decoder_layers)
                .map(|i| {
                    DecoderLayer::new(&mut store, &format!("decoder.{i}"), cp, c, config.heads, config.ffn_hidden, act, &mut rng)
                })
                .collect(),
            norm: LayerNorm::new(&mut store, "decoder.norm", cp),
            head: Mlp::new(&mut store, "box_head", &[config.corners * cp, cp, 4], act, &mut rng),
        });
        Ok(Network {
            config,
            params: store,
            coarse,
            backbone,
            local,
            global,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Point matrix `NW×5` of a sample, frame-major.
    pub fn input_points(&self, sample: &SeqSample) -> Result<Tensor> {
        let cfg = &self.config;
        let n = cfg.n_frames;
        let w = cfg.points_per_frame;
        if sample.frames.len() != n {
            return Err(Error::shape("sample frames", n, sample.frames.len()));
        }
        if sample.history_boxes.len() + 1 != n {
            return Err(Error::shape("history boxes", n - 1, sample.history_boxes.len()));
        }
        if sample.timestamps.len() != n {
            return Err(Error::shape("timestamps", n, sample.timestamps.len()));
        }
        let mut data = Vec::with_capacity(n * w * 5);
        for (k, f) in sample.frames.iter().enumerate() {
            if f.points.len() != w {
                return Err(Error::shape(format!("points of frame {k}"), w, f.points.len()));
            }
            for p in &f.points {
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(Error::shape(format!("points of frame {k}"), "finite values", "non-finite"));
                }
                data.extend_from_slice(p);
            }
        }
        Ok(Tensor::from_vec(n * w, 5, data))
    }

    /// Coarse current box (`1×4`) and foreground logits (`NW×1`) from the
    /// `NW×5` point matrix.
    pub fn coarse_stage(&self, g: &mut Graph, points: Var) -> Result<(Var, Var)> {
        let (rows, cols) = g.shape(points);
        if cols != 5 || rows == 0 {
            return Err(Error::shape("coarse stage input", "NW×5", format!("{rows}×{cols}")));
        }
        let p = &self.params;
        let h = self.coarse.point_mlp.forward_activated(g, p, points);
        let logits = self.coarse.mask_head.forward(g, p, h);
        let weights = g.sigmoid(logits);
        let weighted = g.mul_col(h, weights);
        let pooled = g.max_pool_groups(weighted, rows);
        let coarse = self.coarse.box_head.forward(g, p, pooled);
        Ok((coarse, logits))
    }

    /// Backbone features `NM×C`, frame-major, for `NW×5` points. Sampling and
    /// grouping depend only on coordinates, so they are computed outside the
    /// graph.
    pub fn point_backbone(&self, g: &mut Graph, points: &Tensor) -> Result<Var> {
        let cfg = &self.config;
        let backbone = self
            .backbone
            .as_ref()
            .ok_or_else(|| Error::Config("this model variant has no backbone".into()))?;
        let w = cfg.points_per_frame;
        if points.cols() != 5 || points.rows() == 0 || points.rows() % w != 0 {
            return Err(Error::shape("backbone input", format!("k·{w}×5"), format!("{}×{}", points.rows(), points.cols())));
        }
        let n = points.rows() / w;
        let (s1, m) = (cfg.sa_centroids, cfg.feature_points);
        let [k1, k2] = cfg.sa_neighbors;
        let [r1, r2] = cfg.sa_radii;
        let mut grouped1 = Vec::with_capacity(n * s1 * k1 * 8);
        let mut grouped2 = Vec::with_capacity(n * m * k2 * 6);
        let mut gather2 = Vec::with_capacity(n * m * k2);
        for f in 0..n {
            let rows: Vec<&[f64]> = (0..w).map(|i| points.row(f * w + i)).collect();
            let xyz: Vec<[f64; 3]> = rows.iter().map(|r| [r[0], r[1], r[2]]).collect();
            let cent1 = farthest_point_sample(&xyz, s1);
            let c1xyz: Vec<[f64; 3]> = cent1.iter().map(|&i| xyz[i]).collect();
            let nb1 = ball_query(&xyz, &c1xyz, r1, k1);
            for (gi, chunk) in nb1.chunks(k1).enumerate() {
                let c = c1xyz[gi];
                for &j in chunk {
                    let r = rows[j];
                    grouped1.extend_from_slice(&[
                        r[0],
                        r[1],
                        r[2],
                        (r[0] - c[0]) / r1,
                        (r[1] - c[1]) / r1,
                        (r[2] - c[2]) / r1,
                        r[3],
                        r[4],
                    ]);
                }
            }
            let cent2 = farthest_point_sample(&c1xyz, m);
            let c2xyz: Vec<[f64; 3]> = cent2.iter().map(|&i| c1xyz[i]).collect();
            let nb2 = ball_query(&c1xyz, &c2xyz, r2, k2);
            for (gi, chunk) in nb2.chunks(k2).enumerate() {
                let c = c2xyz[gi];
                for &j in chunk {
                    let p = c1xyz[j];
                    grouped2.extend_from_slice(&[
                        p[0],
                        p[1],
                        p[2],
                        (p[0] - c[0]) / r2,
                        (p[1] - c[1]) / r2,
                        (p[2] - c[2]) / r2,
                    ]);
                    gather2.push(f * s1 + j);
                }
            }
        }
        let p = &self.params;
        let in1 = g.constant(Tensor::from_vec(n * s1 * k1, 8, grouped1));
        let h1 = backbone.level1.forward_activated(g, p, in1);
        let f1 = g.max_pool_groups(h1, k1);
        let geo2 = g.constant(Tensor::from_vec(n * m * k2, 6, grouped2));
        let feat2 = g.gather_rows(f1, gather2);
        let in2 = g.concat_cols(&[geo2, feat2]);
        let h2 = backbone.level2.forward_activated(g, p, in2);
        Ok(g.max_pool_groups(h2, k2))
    }

    /// Per-frame self-attention over `NM×C` features: frame `i`'s output
    /// depends only on frame `i`'s input.
    pub fn local_encoder(&self, g: &mut Graph, features: Var) -> Result<Var> {
        let enc = self
            .local
            .as_ref()
            .ok_or_else(|| Error::Config("this model variant has no local encoder".into()))?;
        let frames = self.check_features(g, features)?;
        Ok(enc.forward(g, &self.params, features, frames))
    }

    /// Self-attention across all `NM` tokens.
    pub fn global_encoder(&self, g: &mut Graph, features: Var) -> Result<Var> {
        let enc = self
            .global
            .as_ref()
            .ok_or_else(|| Error::Config("this model variant has no global encoder".into()))?;
        self.check_features(g, features)?;
        Ok(enc.forward(g, &self.params, features, 1))
    }

    fn check_features(&self, g: &Graph, features: Var) -> Result<usize> {
        let (rows, cols) = g.shape(features);
        let m = self.config.feature_points;
        if cols != self.config.channels || rows == 0 || rows % m != 0 {
            return Err(Error::shape(
                "encoder input",
                format!("k·{m}×{}", self.config.channels),
                format!("{rows}×{cols}"),
            ));
        }
        Ok(rows / m)
    }

    /// Local tokens first, then global tokens.
    pub fn fuse_features(g: &mut Graph, local: Var, global: Var) -> Result<Var> {
        let (a, b) = (g.shape(local), g.shape(global));
        if a.1 != b.1 {
            return Err(Error::shape("fused feature widths", a.1, b.1));
        }
        Ok(g.concat_rows(&[local, global]))
    }

    /// `(N·L)×C'` tokens from `N×4` box poses, box-major with corners in
    /// canonical order.
    pub fn box_tokens(&self, g: &mut Graph, poses: Var, size: [f64; 3], timestamps: &[f64]) -> Result<Var> {
        let dec = self
            .decoder
            .as_ref()
            .ok_or_else(|| Error::Config("this model variant has no decoder".into()))?;
        let (rows, cols) = g.shape(poses);
        if cols != 4 || rows != timestamps.len() {
            return Err(Error::shape("token boxes", format!("{}×4", timestamps.len()), format!("{rows}×{cols}")));
        }
        if size.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidBox(format!("size {size:?} must be positive")));
        }
        let corners = g.box_corners(poses, &vec![size; rows], timestamps);
        Ok(dec.embed.forward(g, &self.params, corners))
    }

    /// Decoder over box tokens with cross-attention into `memory`.
    pub fn decode(&self, g: &mut Graph, tokens: Var, memory: Var) -> Result<Var> {
        let dec = self
            .decoder
            .as_ref()
            .ok_or_else(|| Error::Config("this model variant has no decoder".into()))?;
        let (tr, tc) = g.shape(tokens);
        if tc != self.config.token_channels || tr % self.config.corners != 0 {
            return Err(Error::shape("decoder tokens", format!("k·{}×{}", self.config.corners, self.config.token_channels), format!("{tr}×{tc}")));
        }
        if g.shape(memory).1 != self.config.channels {
            return Err(Error::shape("decoder memory width", self.config.channels, g.shape(memory).1));
        }
        let mut x = tokens;
        for layer in &dec.layers {
            x = layer.forward(g, &self.params, x, memory);
        }
        Ok(dec.norm.forward(g, &self.params, x))
    }

    /// Flattens each box's `L` corner embeddings and maps them to `(x, y, z, theta)`.
    pub fn box_head(&self, g: &mut Graph, embedding: Var) -> Result<Var> {
        let dec = self
            .decoder
            .as_ref()
            .ok_or_else(|| Error::Config("this model variant has no decoder".into()))?;
        let (rows, cols) = g.shape(embedding);
        let l = self.config.corners;
        if cols != self.config.token_channels || rows % l != 0 {
            return Err(Error::shape("box head input", format!("k·{l}×{}", self.config.token_channels), format!("{rows}×{cols}")));
        }
        let flat = g.reshape(embedding, rows / l, l * cols);
        Ok(dec.head.forward(g, &self.params, flat))
    }

    /// The full model on one sample.
    pub fn forward(&self, g: &mut Graph, sample: &SeqSample) -> Result<ForwardOutput> {
        let points = self.input_points(sample).map_err(|e| e.in_stage("input"))?;
        let n = self.config.n_frames;
        let pts = g.constant(points.clone());
        let (coarse, mask_logits) = self.coarse_stage(g, pts).map_err(|e| e.in_stage("coarse stage"))?;
        let history = (n > 1).then(|| {
            let rows: Vec<[f64; 4]> = sample.history_boxes.iter().map(|b| b.pose_params()).collect();
            g.constant(Tensor::from_rows(&rows))
        });
        let poses = match history {
            Some(h) => g.concat_rows(&[h, coarse]),
            None => coarse,
        };
        let comps = self.config.components;
        if !comps.decoder {
            return Ok(ForwardOutput {
                coarse,
                mask_logits,
                boxes: poses,
                features: None,
                local: None,
                global: None,
                fused: None,
                tokens: None,
                embedding: None,
            });
        }
        let features = self.point_backbone(g, &points).map_err(|e| e.in_stage("point backbone"))?;
        let local = comps
            .local
            .then(|| self.local_encoder(g, features))
            .transpose()
            .map_err(|e| e.in_stage("local encoder"))?;
        let global = comps
            .global
            .then(|| self.global_encoder(g, features))
            .transpose()
            .map_err(|e| e.in_stage("global encoder"))?;
        let fused = match (local, global) {
            (Some(l), Some(gl)) => Self::fuse_features(g, l, gl).map_err(|e| e.in_stage("fusion"))?,
            (Some(x), None) | (None, Some(x)) => x,
            (None, None) => unreachable!("validated config has an encoder"),
        };
        let tokens = self
            .box_tokens(g, poses, sample.target_size, &sample.timestamps)
            .map_err(|e| e.in_stage("box tokens"))?;
        let embedding = self.decode(g, tokens, fused).map_err(|e| e.in_stage("decoder"))?;
        let boxes = self.box_head(g, embedding).map_err(|e| e.in_stage("box head"))?;
        Ok(ForwardOutput {
            coarse,
            mask_logits,
            boxes,
            features: Some(features),
            local,
            global,
            fused: Some(fused),
            tokens: Some(tokens),
            embedding: Some(embedding),
        })
    }

    /// Inference: refined current box `(x, y, z, theta)` in the sample's
    /// local frame.
    pub fn predict(&self, sample: &SeqSample) -> Result<[f64; 4]> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, sample)?;
        let boxes = g.value(out.boxes);
        let last = boxes.row(boxes.rows() - 1);
        let pred = [last[0], last[1], last[2], last[3]];
        if pred.iter().any(|v| !v.is_finite()) {
            return Err(Error::State("model produced a non-finite box".into()));
        }
        Ok(pred)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_labels_roundtrip() {
        for label in ["C", "C+G+D", "C+L+D", "C+L+G+D"] {
            assert_eq!(Components::from_label(label).unwrap().label(), label);
        }
        assert!(Components::from_label("L+D").is_err());
        assert!(Components::from_label("C+X").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig::micro().validate().is_ok());
        let bad = ModelConfig {
            heads: 3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            corners: 4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            components: Components::from_label("C+D").unwrap(),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fps_spreads_points() {
        let pts = [[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [5.0, 0.0, 0.0], [0.0, 5.0, 0.0]];
        let idx = farthest_point_sample(&pts, 3);
        let mut chosen: Vec<usize> = idx.clone();
        chosen.sort();
        assert_eq!(chosen.len(), 3);
        assert!(idx.contains(&2) && idx.contains(&3));
    }

    #[test]
    fn ball_query_pads_with_nearest() {
        let pts = [[0.0, 0.0, 0.0], [0.2, 0.0, 0.0], [3.0, 0.0, 0.0]];
        let nb = ball_query(&pts, &[[0.0, 0.0, 0.0]], 0.5, 4);
        assert_eq!(nb, vec![0, 1, 0, 0]);
    }
}
