use super::{DualMoe, HazardCurve, Linear, RouterInput, RoutingTrace};
use crate::autodiff::{BoundParams, Graph, Matrix, Var};
use crate::data::PatientRecord;
use crate::error::{Error, Result};

/// Covariates and targets of a mini-batch in matrix form.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    pub x: Matrix,
    pub tau: Vec<usize>,
    pub event: Vec<bool>,
}

impl GraphBatch {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a PatientRecord>) -> Result<Self> {
        let mut data = Vec::new();
        let mut tau = Vec::new();
        let mut event = Vec::new();
        let mut width = None;
        for r in records {
            if *width.get_or_insert(r.x.len()) != r.x.len() {
                return Err(Error::config("records in a batch differ in feature length"));
            }
            data.extend_from_slice(&r.x);
            tau.push(r.tau);
            event.push(r.event);
        }
        let Some(width) = width else {
            return Err(Error::usage("empty batch"));
        };
        Ok(GraphBatch {
            x: Matrix::from_vec(tau.len(), width, data)?,
            tau,
            event,
        })
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }
}

/// Graph nodes produced by one batch forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    /// `B × (t_max + 1)` hazards.
    pub lambda: Var,
    /// `B × K` feature routing, absent without the feature MoE.
    pub pi_feat: Option<Var>,
    /// `(B·(t_max + 1)) × L` hazard routing, patient-major, absent without
    /// the hazard MoE.
    pub pi_haz: Option<Var>,
    pub batch: usize,
}

fn dense(g: &mut Graph, p: &BoundParams, x: Var, l: Linear, relu: bool) -> Result<Var> {
    let y = g.affine(x, p.var(l.w), p.var(l.b))?;
    Ok(if relu { g.relu(y) } else { y })
}

impl DualMoe {
    /// Batched forward pass. `x` is `B × input_dim`.
    pub fn forward_graph(&self, g: &mut Graph, p: &BoundParams, x: Var) -> Result<ForwardVars> {
        let cfg = self.config();
        let lay = self.layout();
        let (b, width) = g.value(x).shape();
        if width != cfg.input_dim {
            return Err(Error::config(format!(
                "expected {} features, got {width}",
                cfg.input_dim
            )));
        }
        if b == 0 {
            return Err(Error::usage("empty batch"));
        }
        let t1 = cfg.num_bins();

        let mut h = x;
        for &l in &lay.encoder {
            h = dense(g, p, h, l, true)?;
        }
        let mut outputs = Vec::with_capacity(lay.feat_experts.len());
        for stack in &lay.feat_experts {
            let mut f = h;
            for &l in stack {
                f = dense(g, p, f, l, true)?;
            }
            outputs.push(f);
        }
        let (z, pi_feat) = match lay.feat_router {
            Some(r) => {
                let logits = dense(g, p, h, r, false)?;
                let pi = g.softmax_rows(logits)?;
                let mut z = None;
                for (k, &f) in outputs.iter().enumerate() {
                    let w = g.slice_cols(pi, k, k + 1)?;
                    let term = g.mul(w, f)?;
                    z = Some(match z {
                        Some(acc) => g.add(acc, term)?,
                        None => term,
                    });
                }
                (z.expect("at least one expert"), Some(pi))
            }
            None => (outputs[0], None),
        };

        let emb = p.var(lay.time_embedding);
        let dz = cfg.z_dim();
        // A layer on [z; e_t] for every (patient, bin) pair, patient-major.
        // z·W_z is computed once per patient and e_t·W_e once per bin.
        let on_concat = |g: &mut Graph, l: Linear| -> Result<Var> {
            let w = p.var(l.w);
            let wz = g.slice_rows(w, 0, dz)?;
            let we = g.slice_rows(w, dz, dz + cfg.d_time)?;
            let zpart = g.matmul(z, wz)?;
            let zpart = g.add(zpart, p.var(l.b))?;
            let zpart = g.repeat_each(zpart, t1);
            let epart = g.matmul(emb, we)?;
            let epart = g.tile_rows(epart, b);
            g.add(zpart, epart)
        };

        let mut logits = Vec::with_capacity(lay.haz_experts.len());
        for expert in &lay.haz_experts {
            let mut a = on_concat(g, expert.first())?;
            if !expert.hidden.is_empty() {
                a = g.relu(a);
                for &l in &expert.hidden[1..] {
                    a = dense(g, p, a, l, true)?;
                }
                a = dense(g, p, a, expert.out, false)?;
            }
            logits.push(a);
        }
        let (mixed, pi_haz) = match lay.haz_router {
            Some(r) => {
                let pi = match cfg.hazard_router_input {
                    RouterInput::Both => {
                        let a = on_concat(g, r)?;
                        g.softmax_rows(a)?
                    }
                    RouterInput::FeaturesOnly => {
                        let a = dense(g, p, z, r, false)?;
                        let s = g.softmax_rows(a)?;
                        g.repeat_each(s, t1)
                    }
                    RouterInput::TimeOnly => {
                        let a = dense(g, p, emb, r, false)?;
                        let s = g.softmax_rows(a)?;
                        g.tile_rows(s, b)
                    }
                };
                let all = g.concat_cols(&logits)?;
                let weighted = g.mul(all, pi)?;
                (g.row_sums(weighted), Some(pi))
            }
            None => (logits[0], None),
        };
        let lambda = g.sigmoid(mixed);
        let lambda = g.reshape(lambda, b, t1)?;
        Ok(ForwardVars {
            lambda,
            pi_feat,
            pi_haz,
            batch: b,
        })
    }

    /// Vectorized prediction over many records; agrees with the per-record
    /// path to floating-point rounding.
    pub fn batch_forward(&self, records: &[PatientRecord]) -> Result<(Vec<HazardCurve>, Vec<RoutingTrace>)> {
        if records.is_empty() {
            return Err(Error::usage("empty batch"));
        }
        const CHUNK: usize = 512;
        let t1 = self.config().num_bins();
        let mut curves = Vec::with_capacity(records.len());
        let mut traces = Vec::with_capacity(records.len());
        for chunk in records.chunks(CHUNK) {
            let batch = GraphBatch::from_records(chunk)?;
            let mut g = Graph::new();
            let p = self.params().bind_constants(&mut g);
            let x = g.constant(batch.x);
            let out = self.forward_graph(&mut g, &p, x)?;
            let lambda = g.value(out.lambda);
            for i in 0..chunk.len() {
                curves.push(HazardCurve::from_hazards(lambda.row(i).to_vec()));
                let pi_feat = match out.pi_feat {
                    Some(v) => g.value(v).row(i).to_vec(),
                    None => vec![1.0],
                };
                let pi_haz = match out.pi_haz {
                    Some(v) => {
                        let m = g.value(v);
                        let l = m.cols();
                        Matrix::from_vec(t1, l, m.data()[i * t1 * l..(i + 1) * t1 * l].to_vec())?
                    }
                    None => Matrix::filled(t1, 1, 1.0),
                };
                traces.push(RoutingTrace { pi_feat, pi_haz });
            }
        }
        Ok((curves, traces))
    }

    pub fn predict_curves(&self, records: &[PatientRecord]) -> Result<Vec<HazardCurve>> {
        Ok(self.batch_forward(records)?.0)
    }
}
