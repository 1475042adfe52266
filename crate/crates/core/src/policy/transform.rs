use super::schedule::SamplingSchedule;
use super::simulate;
use crate::error::{ensure, Error, Result};
use crate::model::{samples_to_reach, step_unchecked, ModelParams};

/// Concentrates sampling on the given rounds.
///
/// At each chosen round the output takes just enough samples to match the
/// input's posterior variance there (rounded up in integer mode), or copies
/// the input's count when nothing was sampled since the previous chosen
/// round. It takes none elsewhere. Samples the input spent after the last chosen round
/// are dropped.
pub fn rebatch(
    schedule: &SamplingSchedule,
    params: &ModelParams,
    v0: f64,
    timesteps: &[usize],
) -> Result<SamplingSchedule> {
    let n = schedule.len();
    ensure(timesteps.windows(2).all(|w| w[0] < w[1]), || {
        Error::InvalidParameter("timesteps must be strictly increasing".into())
    })?;
    ensure(timesteps.iter().all(|&t| t >= 1 && t <= n), || {
        Error::InvalidParameter(format!("timesteps must lie in 1..={n}"))
    })?;
    let input = simulate(schedule, params, v0)?;
    let src = schedule.samples();
    let mut out = vec![0.0; n];
    let mut v = v0;
    let mut prev = 0usize;
    let mut spent_in = 0.0;
    let mut spent_out = 0.0;
    for &t in timesteps {
        let gap = t - prev;
        let v_pre = v + gap as f64 * params.rho;
        let rec = &input.records[t - 1];
        let untouched = src[prev..t - 1].iter().all(|&s| s == 0.0);
        let s = if untouched && v_pre <= rec.v_pre {
            src[t - 1]
        } else if rec.v_post < v_pre * (1.0 - 1e-12) {
            let need = samples_to_reach(v_pre, rec.v_post, params.sigma)?;
            if params.fractional_samples {
                need
            } else {
                (need - 1e-9).ceil().max(0.0)
            }
        } else {
            0.0
        };
        out[t - 1] = s;
        v = if s > 0.0 { step_unchecked(v + (gap - 1) as f64 * params.rho, s, params) } else { v_pre };
        spent_in += src[prev..t].iter().map(|&x| params.cost(x)).sum::<f64>();
        spent_out += params.cost(s);
        let tol = 1e-9 * rec.v_post.max(1.0);
        if v > rec.v_post + tol || spent_out > spent_in * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::Internal(format!(
                "rebatching at round {t} produced variance {v} (input {}) or spend {spent_out} (input {spent_in})",
                rec.v_post
            )));
        }
        prev = t;
    }
    SamplingSchedule::new(out)
}

/// Rearranges a finite-horizon schedule into save-then-spend form: no
/// samples before some round `r` and posterior variance at most `c` from `r`
/// through `R`.
///
/// Repeatedly takes the first interval after the first sampling round where
/// the variance sits above `c`, and moves the sampling block that precedes it
/// later by the interval's length. The block's first round absorbs the extra
/// samples needed to start from the same variance; the round that ended the
/// interval now needs fewer.
pub fn canonicalize_save_spend(
    schedule: &SamplingSchedule,
    params: &ModelParams,
    v0: f64,
    horizon: usize,
) -> Result<SamplingSchedule> {
    let mut s = schedule.rounds(horizon);
    for x in &s {
        params.check_samples(*x)?;
    }
    let c = params.c;
    // Each pass removes one above-c interval, so `horizon` passes suffice.
    for _ in 0..=horizon {
        defer_idle_samples(&mut s, params, v0);
        let trace = simulate(&SamplingSchedule::new(s.clone())?, params, v0)?;
        let v = |t: usize| trace.records[t - 1].v_post;
        let Some(t1) = (1..=horizon).find(|&t| s[t - 1] > 0.0) else {
            return SamplingSchedule::new(s);
        };
        let Some(t2) = (t1 + 1..=horizon).find(|&t| v(t) > c) else {
            return SamplingSchedule::new(s);
        };
        let t3 = (t2 + 1..=horizon).find(|&t| v(t) <= c).unwrap_or(horizon + 1);
        let delta = t3 - t2;

        let mut next = vec![0.0; horizon];
        let start_pre = trace.records[t1 - 1].v_pre;
        let extra = samples_to_reach(start_pre + delta as f64 * params.rho, start_pre, params.sigma)?;
        next[t1 + delta - 1] = round_up(s[t1 - 1] + extra, params);
        for t in t1 + 1..t2 {
            next[t + delta - 1] = s[t - 1];
        }
        if t3 <= horizon {
            // variance entering t3 under the shifted schedule
            let mut w = v0;
            for x in next.iter().take(t3 - 1) {
                w = step_unchecked(w, *x, params);
            }
            let pre = w + params.rho;
            let target = v(t3);
            let need = if target < pre { samples_to_reach(pre, target, params.sigma)? } else { 0.0 };
            next[t3 - 1] = round_up(need, params);
            next[t3..].copy_from_slice(&s[t3..]);
        }
        s = next;
    }
    Err(Error::Internal("save-then-spend canonicalisation did not terminate".into()))
}

fn round_up(x: f64, params: &ModelParams) -> f64 {
    if params.fractional_samples {
        x
    } else {
        (x - 1e-9).ceil().max(0.0)
    }
}

/// Moves samples taken in rounds that still end above `c` into the following
/// round; samples in a final above-`c` round are dropped. Lumping samples into
/// a later round leaves the later variance no higher and never costs more.
fn defer_idle_samples(s: &mut [f64], params: &ModelParams, v0: f64) {
    let mut v = v0;
    let mut carry = 0.0;
    for st in s.iter_mut() {
        *st += carry;
        carry = 0.0;
        let after = step_unchecked(v, *st, params);
        if *st > 0.0 && after > params.c {
            carry = *st;
            *st = 0.0;
            v += params.rho;
        } else {
            v = after;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::trace_value;

    fn unit(c: f64) -> ModelParams {
        ModelParams::new(1.0, 1.0, c, 1.0).unwrap()
    }

    #[test]
    fn rebatch_identity_on_sampling_rounds() {
        let p = unit(0.75);
        let s = SamplingSchedule::new(vec![0.0, 2.0, 1.0, 0.0, 3.0]).unwrap();
        let out = rebatch(&s, &p, 1.0, &[2, 3, 5]).unwrap();
        assert_eq!(out.samples(), s.samples());
    }

    #[test]
    fn rebatch_two_rounds_into_one() {
        let p = unit(0.75);
        let s = SamplingSchedule::new(vec![1.0, 1.0]).unwrap();
        let out = rebatch(&s, &p, 1.0, &[2]).unwrap();
        assert_eq!(out.samples()[0], 0.0);
        assert!(out.samples()[1] <= 2.0);
        let a = simulate(&s, &p, 1.0).unwrap();
        let b = simulate(&out, &p, 1.0).unwrap();
        assert!(b.records[1].v_post <= a.records[1].v_post + 1e-12);
    }

    #[test]
    fn rebatch_rejects_bad_timesteps() {
        let p = unit(0.75);
        let s = SamplingSchedule::new(vec![1.0, 1.0]).unwrap();
        assert!(rebatch(&s, &p, 1.0, &[2, 2]).is_err());
        assert!(rebatch(&s, &p, 1.0, &[3]).is_err());
        assert!(rebatch(&s, &p, 1.0, &[0]).is_err());
    }

    #[test]
    fn canonical_null_and_fixed_point() {
        let p = unit(0.75);
        let null = SamplingSchedule::zeros(6);
        assert!(canonicalize_save_spend(&null, &p, 1.0, 6).unwrap().is_null());
        let sts = SamplingSchedule::new(vec![0.0, 0.0, 3.0, 1.0, 1.0, 1.0]).unwrap();
        let out = canonicalize_save_spend(&sts, &p, 1.0, 6).unwrap();
        assert_eq!(out.samples(), sts.samples());
    }

    #[test]
    fn canonical_merges_dips() {
        let p = unit(0.75);
        // dips below c at round 2, rises, dips again at round 6
        let s = SamplingSchedule::new(vec![0.0, 3.0, 0.0, 0.0, 0.0, 5.0, 0.0]).unwrap();
        let out = canonicalize_save_spend(&s, &p, 1.0, 7).unwrap();
        let before = trace_value(&simulate(&s, &p, 1.0).unwrap()).unwrap();
        let tr = simulate(&out, &p, 1.0).unwrap();
        assert!(trace_value(&tr).unwrap() >= before - 1e-12);
        let r = out.samples().iter().position(|&x| x > 0.0).unwrap();
        assert!(tr.records[r..].iter().all(|rec| rec.v_post <= 0.75 + 1e-12));
    }
}
