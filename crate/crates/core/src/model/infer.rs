use super::{DualMoe, EncodedRepresentation, HazardCurve, Linear, RouterInput, RoutingTrace};
use crate::autodiff::{sigmoid, softmax_in_place, Matrix};
use crate::error::{Error, Result};

impl DualMoe {
    fn apply(&self, x: &[f64], l: Linear, relu: bool) -> Vec<f64> {
        let w = self.params().value(l.w);
        let mut y = self.params().value(l.b).data().to_vec();
        debug_assert_eq!(x.len(), w.rows());
        for (i, &xi) in x.iter().enumerate() {
            for (yj, &wij) in y.iter_mut().zip(w.row(i)) {
                *yj += xi * wij;
            }
        }
        if relu {
            y.iter_mut().filter(|v| **v < 0.0).for_each(|v| *v = 0.0);
        }
        y
    }

    /// Feature side for one patient: shared encoder, expert mixture and
    /// the routing weights that produced it.
    pub fn encode(&self, x: &[f64]) -> Result<EncodedRepresentation> {
        let cfg = self.config();
        if x.len() != cfg.input_dim {
            return Err(Error::config(format!(
                "expected {} features, got {}",
                cfg.input_dim,
                x.len()
            )));
        }
        let lay = self.layout();
        let mut h = x.to_vec();
        for &l in &lay.encoder {
            h = self.apply(&h, l, true);
        }
        let outputs: Vec<Vec<f64>> = lay
            .feat_experts
            .iter()
            .map(|stack| stack.iter().fold(h.clone(), |f, &l| self.apply(&f, l, true)))
            .collect();
        match lay.feat_router {
            None => Ok(EncodedRepresentation {
                z: outputs.into_iter().next().expect("one expert"),
                pi_feat: vec![1.0],
            }),
            Some(r) => {
                let mut pi = self.apply(&h, r, false);
                check_finite(&pi)?;
                softmax_in_place(&mut pi);
                let mut z = vec![0.0; cfg.z_dim()];
                for (w, f) in pi.iter().zip(&outputs) {
                    for (zi, fi) in z.iter_mut().zip(f) {
                        *zi += w * fi;
                    }
                }
                Ok(EncodedRepresentation { z, pi_feat: pi })
            }
        }
    }

    /// Hazard side for one patient, bin by bin on `[z; e_t]`.
    pub fn hazard_forward(&self, enc: &EncodedRepresentation) -> Result<(HazardCurve, RoutingTrace)> {
        let cfg = self.config();
        if enc.z.len() != cfg.z_dim() {
            return Err(Error::config(format!(
                "expected z of length {}, got {}",
                cfg.z_dim(),
                enc.z.len()
            )));
        }
        let lay = self.layout();
        let emb = self.params().value(lay.time_embedding);
        let t1 = cfg.num_bins();
        let l_count = lay.haz_experts.len();
        let mut lambda = Vec::with_capacity(t1);
        let mut pi_haz = Matrix::zeros(t1, l_count);
        for t in 0..t1 {
            let e = emb.row(t);
            let cat: Vec<f64> = enc.z.iter().chain(e).copied().collect();
            let logits: Vec<f64> = lay
                .haz_experts
                .iter()
                .map(|ex| {
                    let mut a = self.apply(&cat, ex.first(), !ex.hidden.is_empty());
                    if !ex.hidden.is_empty() {
                        for &l in &ex.hidden[1..] {
                            a = self.apply(&a, l, true);
                        }
                        a = self.apply(&a, ex.out, false);
                    }
                    a[0]
                })
                .collect();
            let mixed = match lay.haz_router {
                None => {
                    pi_haz.set(t, 0, 1.0);
                    logits[0]
                }
                Some(r) => {
                    let input: &[f64] = match cfg.hazard_router_input {
                        RouterInput::Both => &cat,
                        RouterInput::FeaturesOnly => &enc.z,
                        RouterInput::TimeOnly => e,
                    };
                    let mut pi = self.apply(input, r, false);
                    check_finite(&pi)?;
                    softmax_in_place(&mut pi);
                    pi_haz.row_mut(t).copy_from_slice(&pi);
                    pi.iter().zip(&logits).map(|(w, a)| w * a).sum()
                }
            };
            lambda.push(sigmoid(mixed));
        }
        Ok((
            HazardCurve::from_hazards(lambda),
            RoutingTrace {
                pi_feat: enc.pi_feat.clone(),
                pi_haz,
            },
        ))
    }

    pub fn predict_with_trace(&self, x: &[f64]) -> Result<(HazardCurve, RoutingTrace)> {
        self.hazard_forward(&self.encode(x)?)
    }

    pub fn predict_curve(&self, x: &[f64]) -> Result<HazardCurve> {
        Ok(self.predict_with_trace(x)?.0)
    }
}

fn check_finite(logits: &[f64]) -> Result<()> {
    match logits.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::NumericDomain(format!("non-finite router logit {v}"))),
        None => Ok(()),
    }
}
