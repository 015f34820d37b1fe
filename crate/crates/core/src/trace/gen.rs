//! Synthetic workload generator.
//!
//! Call sizes follow a log-normal fitted (least squares in log space) to the
//! participant-count quantile targets. Joiner durations use a piecewise
//! log-normal that passes through every configured quantile knot. Arrivals mix
//! Gaussian bursts around each :00/:30 mark with a uniform background, both
//! shaped by an hourly envelope.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, LogNormal, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};
use thiserror::Error;

use super::{
    Action, CallRecord, CallTrace, Media, MediaKind, ParticipantEvent, DAY_S,
};

const WEEK_S: u32 = 7 * DAY_S;
const HALF_HOUR_S: u32 = 1800;

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("invalid trace generator config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantileTarget {
    pub p: f64,
    pub value: f64,
}

impl QuantileTarget {
    pub const fn new(p: f64, value: f64) -> Self {
        Self { p, value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurstProfile {
    /// Share of arrivals drawn from the :00/:30 Gaussians.
    pub weight: f64,
    pub sigma_s: f64,
    /// Relative call-start intensity per hour of day.
    pub hourly_envelope: Vec<f64>,
}

impl Default for BurstProfile {
    fn default() -> Self {
        Self {
            weight: 0.6,
            sigma_s: 180.0,
            hourly_envelope: vec![
                0.04, 0.03, 0.03, 0.03, 0.04, 0.06, 0.15, 0.4, 0.8, 1.0, 1.0, 0.7, 0.6, 0.95,
                1.0, 0.95, 0.8, 0.5, 0.3, 0.2, 0.15, 0.1, 0.07, 0.05,
            ],
        }
    }
}

/// Half-width of the window around each :00/:30 mark used to measure burstiness.
pub const BURST_WINDOW_S: u32 = 120;

impl BurstProfile {
    /// Share of a uniform day that falls within `BURST_WINDOW_S` of a mark.
    pub fn offpeak_window_share() -> f64 {
        (2 * BURST_WINDOW_S + 1) as f64 / HALF_HOUR_S as f64
    }

    /// Expected ratio between the share of calls starting near a mark and the
    /// share a burst-free arrival process would put there.
    pub fn expected_burst_ratio(&self) -> f64 {
        let base = Self::offpeak_window_share();
        let gauss = StatNormal::standard();
        let half = (BURST_WINDOW_S as f64 + 0.5) / self.sigma_s;
        let in_window = gauss.cdf(half) - gauss.cdf(-half);
        (self.weight * in_window + (1.0 - self.weight) * base) / base
    }
}

/// Spread of peak participants across occurrences of one recurring series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesJitter {
    /// Probability that a series always has the same size. Series with a
    /// small sampled deviation can still repeat exactly after rounding.
    pub p_fixed: f64,
    /// Median per-series standard deviation among the remaining series.
    pub median_sigma: f64,
    /// Log-space spread of the per-series standard deviation.
    pub sigma_spread: f64,
}

impl Default for SeriesJitter {
    fn default() -> Self {
        Self {
            p_fixed: 0.1,
            median_sigma: 1.0,
            sigma_spread: 0.8,
        }
    }
}

impl SeriesJitter {
    pub fn none() -> Self {
        Self {
            p_fixed: 1.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceGenConfig {
    /// Calls starting inside the reported day.
    pub n_calls: usize,
    pub duration_s: u32,
    pub recurring_fraction: f64,
    /// Defaults to one series per recurring call of the reported day.
    pub n_series: Option<usize>,
    /// Weekly history occurrences emitted before the reported day for each series.
    pub n_weeks: u32,
    pub series_jitter: SeriesJitter,
    /// Non-recurring calls on the training day preceding the reported day.
    /// Defaults to the number of non-recurring calls of the reported day.
    pub training_calls: Option<usize>,
    pub burst: BurstProfile,
    pub participant_quantiles: Vec<QuantileTarget>,
    pub max_participants_cap: u32,
    pub joiner_duration_quantiles: Vec<QuantileTarget>,
    /// Scheduled meeting lengths in minutes with their weights.
    pub call_minutes: Vec<(f64, f64)>,
    pub audio_mbps: f64,
    pub video_mbps: f64,
    pub hd_video_mbps: f64,
    pub p_video: f64,
    /// Concentration of the per-call video propensity (Beta prior around `p_video`).
    pub video_concentration: f64,
    pub p_video_off: f64,
    pub p_quality_change: f64,
    pub p_screen_share: f64,
    pub screen_share_mbps: f64,
    pub p_early_leave: f64,
    pub seed: u64,
}

impl Default for TraceGenConfig {
    fn default() -> Self {
        Self {
            n_calls: 50_000,
            duration_s: DAY_S,
            recurring_fraction: 0.5,
            n_series: None,
            n_weeks: 5,
            series_jitter: SeriesJitter::default(),
            training_calls: None,
            burst: BurstProfile::default(),
            participant_quantiles: vec![
                QuantileTarget::new(0.10, 2.5),
                QuantileTarget::new(0.50, 4.0),
                QuantileTarget::new(0.90, 10.5),
                QuantileTarget::new(0.95, 13.0),
            ],
            max_participants_cap: 500,
            joiner_duration_quantiles: vec![
                QuantileTarget::new(0.50, 12.0),
                QuantileTarget::new(0.75, 46.0),
                QuantileTarget::new(0.95, 293.0),
                QuantileTarget::new(0.99, 550.0),
            ],
            call_minutes: vec![
                (15.0, 0.15),
                (30.0, 0.45),
                (45.0, 0.10),
                (60.0, 0.22),
                (90.0, 0.05),
                (120.0, 0.03),
            ],
            audio_mbps: 0.05,
            video_mbps: 1.0,
            hd_video_mbps: 1.5,
            p_video: 0.5,
            video_concentration: 4.0,
            p_video_off: 0.15,
            p_quality_change: 0.1,
            p_screen_share: 0.2,
            screen_share_mbps: 1.5,
            p_early_leave: 0.1,
            seed: 0,
        }
    }
}

/// Log-normal parameters in natural-log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalFit {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalFit {
    pub fn quantile(&self, p: f64) -> f64 {
        (self.mu + self.sigma * StatNormal::standard().inverse_cdf(p)).exp()
    }
}

/// Least-squares fit of `ln(value) = mu + sigma * z(p)` over the targets.
pub fn fit_lognormal(targets: &[QuantileTarget]) -> Result<LogNormalFit, GenError> {
    check_quantiles("participant_quantiles", targets)?;
    let gauss = StatNormal::standard();
    let pts: Vec<(f64, f64)> = targets
        .iter()
        .map(|q| (gauss.inverse_cdf(q.p), q.value.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sigma = sxy / sxx;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(GenError::InvalidConfig(
            "participant_quantiles do not determine a log-normal spread".into(),
        ));
    }
    Ok(LogNormalFit {
        mu: my - sigma * mx,
        sigma,
    })
}

fn check_quantiles(key: &str, targets: &[QuantileTarget]) -> Result<(), GenError> {
    if targets.len() < 2 {
        return Err(GenError::InvalidConfig(format!(
            "{key} needs at least two targets"
        )));
    }
    for q in targets {
        if !(q.p > 0.0 && q.p < 1.0) || !(q.value > 0.0 && q.value.is_finite()) {
            return Err(GenError::InvalidConfig(format!(
                "{key}: target (p={}, value={}) out of range",
                q.p, q.value
            )));
        }
    }
    for w in targets.windows(2) {
        if !(w[1].p > w[0].p && w[1].value > w[0].value) {
            return Err(GenError::InvalidConfig(format!(
                "{key} must be strictly increasing"
            )));
        }
    }
    Ok(())
}

/// Inverse-CDF sampler that is log-linear in the normal score between knots.
#[derive(Debug, Clone)]
struct PiecewiseLogNormal {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLogNormal {
    fn new(targets: &[QuantileTarget]) -> Result<Self, GenError> {
        check_quantiles("joiner_duration_quantiles", targets)?;
        let gauss = StatNormal::standard();
        Ok(Self {
            knots: targets
                .iter()
                .map(|q| (gauss.inverse_cdf(q.p), q.value.ln()))
                .collect(),
        })
    }

    fn at(&self, z: f64) -> f64 {
        let k = &self.knots;
        let seg = match k.iter().position(|&(kz, _)| z < kz) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => k.len() - 2,
        };
        let (z0, y0) = k[seg];
        let (z1, y1) = k[seg + 1];
        (y0 + (z - z0) * (y1 - y0) / (z1 - z0)).exp()
    }
}

impl TraceGenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.recurring_fraction) {
            return bad(format!(
                "recurring_fraction {} outside [0,1]",
                self.recurring_fraction
            ));
        }
        if self.duration_s < HALF_HOUR_S {
            return bad("duration_s must cover at least 30 minutes".into());
        }
        if self.n_series == Some(0) && self.recurring_calls() > 0 {
            return bad("n_series must be positive when recurring calls exist".into());
        }
        for (key, p) in [
            ("p_video", self.p_video),
            ("p_video_off", self.p_video_off),
            ("p_quality_change", self.p_quality_change),
            ("p_screen_share", self.p_screen_share),
            ("p_early_leave", self.p_early_leave),
            ("burst.weight", self.burst.weight),
            ("series_jitter.p_fixed", self.series_jitter.p_fixed),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{key} {p} outside [0,1]"));
            }
        }
        for (key, v) in [
            ("audio_mbps", self.audio_mbps),
            ("video_mbps", self.video_mbps),
            ("hd_video_mbps", self.hd_video_mbps),
            ("screen_share_mbps", self.screen_share_mbps),
            ("burst.sigma_s", self.burst.sigma_s),
            ("video_concentration", self.video_concentration),
            ("series_jitter.median_sigma", self.series_jitter.median_sigma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{key} must be positive"));
            }
        }
        if self.series_jitter.sigma_spread < 0.0 {
            return bad("series_jitter.sigma_spread must be non-negative".into());
        }
        if self.max_participants_cap == 0 {
            return bad("max_participants_cap must be positive".into());
        }
        if self.burst.hourly_envelope.len() != 24
            || self.burst.hourly_envelope.iter().any(|w| !(*w >= 0.0))
            || self.burst.hourly_envelope.iter().sum::<f64>() <= 0.0
        {
            return bad("burst.hourly_envelope needs 24 non-negative weights".into());
        }
        if self.call_minutes.is_empty()
            || self.call_minutes.iter().any(|&(m, w)| !(m > 0.0) || !(w >= 0.0))
            || self.call_minutes.iter().map(|c| c.1).sum::<f64>() <= 0.0
        {
            return bad("call_minutes needs positive lengths with non-negative weights".into());
        }
        fit_lognormal(&self.participant_quantiles)?;
        PiecewiseLogNormal::new(&self.joiner_duration_quantiles)?;
        Ok(())
    }

    pub fn recurring_calls(&self) -> usize {
        (self.n_calls as f64 * self.recurring_fraction).round() as usize
    }

    fn series_count(&self) -> usize {
        let r = self.recurring_calls();
        if r == 0 {
            0
        } else {
            self.n_series.unwrap_or(r)
        }
    }

    fn training_count(&self) -> usize {
        self.training_calls
            .unwrap_or(self.n_calls - self.recurring_calls())
    }

    /// Length of the history prefix preceding the reported day.
    pub fn warmup_s(&self) -> u32 {
        let weeks = if self.series_count() > 0 { self.n_weeks * WEEK_S } else { 0 };
        let training = if self.training_count() > 0 { DAY_S } else { 0 };
        weeks.max(training)
    }
}

struct Samplers {
    size: LogNormalFit,
    joiner: PiecewiseLogNormal,
    hour_cdf: Vec<f64>,
    mark_cdf: Vec<f64>,
    minutes_cdf: Vec<f64>,
    video_prior: Beta<f64>,
    sigma: Option<LogNormal<f64>>,
}

fn cdf(weights: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .into_iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    for v in &mut out {
        *v /= acc;
    }
    out
}

fn pick(cdf: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Shape of one call occurrence before it is expanded into events.
struct CallPlan {
    call_id: String,
    series_id: Option<String>,
    start_s: u32,
    length_s: u32,
    participants: u32,
    video_propensity: f64,
}

struct SeriesPlan {
    base_size: f64,
    sigma: f64,
    video_propensity: f64,
    minutes_idx: usize,
}

pub fn generate_trace(cfg: &TraceGenConfig) -> Result<CallTrace, GenError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let env = &cfg.burst.hourly_envelope;
    let hours_per_day = (cfg.duration_s as usize).div_ceil(3600);
    let marks_per_day = (cfg.duration_s as usize).div_ceil(HALF_HOUR_S as usize);
    let samplers = Samplers {
        size: fit_lognormal(&cfg.participant_quantiles)?,
        joiner: PiecewiseLogNormal::new(&cfg.joiner_duration_quantiles)?,
        hour_cdf: cdf((0..hours_per_day).map(|h| env[h % 24])),
        mark_cdf: cdf((0..marks_per_day).map(|m| env[(m / 2) % 24])),
        minutes_cdf: cdf(cfg.call_minutes.iter().map(|c| c.1)),
        video_prior: Beta::new(
            cfg.video_concentration * cfg.p_video.max(1e-6),
            cfg.video_concentration * (1.0 - cfg.p_video).max(1e-6),
        )
        .map_err(|e| GenError::InvalidConfig(format!("video prior: {e}")))?,
        sigma: if cfg.series_jitter.sigma_spread > 0.0 {
            Some(
                LogNormal::new(
                    cfg.series_jitter.median_sigma.ln(),
                    cfg.series_jitter.sigma_spread,
                )
                .map_err(|e| GenError::InvalidConfig(format!("series jitter: {e}")))?,
            )
        } else {
            None
        },
    };

    let warmup = cfg.warmup_s();
    let day = cfg.duration_s;
    let mut plans: Vec<CallPlan> = Vec::new();

    // Recurring series and their occurrences.
    let n_series = cfg.series_count();
    let series: Vec<SeriesPlan> = (0..n_series)
        .map(|_| SeriesPlan {
            base_size: sample_size(&samplers.size, cfg.max_participants_cap, &mut rng) as f64,
            sigma: if rng.random_bool(cfg.series_jitter.p_fixed) {
                0.0
            } else {
                samplers
                    .sigma
                    .map_or(cfg.series_jitter.median_sigma, |d| d.sample(&mut rng))
            },
            video_propensity: samplers.video_prior.sample(&mut rng),
            minutes_idx: pick(&samplers.minutes_cdf, &mut rng),
        })
        .collect();
    let mut first_start: Vec<Option<u32>> = vec![None; n_series];
    let n_recurring = cfg.recurring_calls();
    for k in 0..n_recurring {
        let s = k % n_series;
        let start = warmup + sample_arrival(cfg, &samplers, &mut rng);
        first_start[s].get_or_insert(start);
        plans.push(occurrence(
            cfg,
            &series[s],
            format!("r{k:07}"),
            format!("s{s:06}"),
            start,
            &mut rng,
        ));
    }
    for (s, anchor) in first_start.iter().enumerate() {
        let Some(anchor) = *anchor else { continue };
        for w in 1..=cfg.n_weeks {
            plans.push(occurrence(
                cfg,
                &series[s],
                format!("h{s:06}w{w}"),
                format!("s{s:06}"),
                anchor - w * WEEK_S,
                &mut rng,
            ));
        }
    }

    // Non-recurring calls of the reported day and of the training day.
    let one_off = |id: String, start: u32, rng: &mut ChaCha8Rng| CallPlan {
        call_id: id,
        series_id: None,
        start_s: start,
        length_s: sample_length(cfg, pick(&samplers.minutes_cdf, rng), rng),
        participants: sample_size(&samplers.size, cfg.max_participants_cap, rng),
        video_propensity: samplers.video_prior.sample(rng),
    };
    for k in 0..cfg.n_calls - n_recurring {
        let start = warmup + sample_arrival(cfg, &samplers, &mut rng);
        plans.push(one_off(format!("c{k:07}"), start, &mut rng));
    }
    if warmup >= DAY_S {
        for k in 0..cfg.training_count() {
            let start = warmup - DAY_S + sample_arrival(cfg, &samplers, &mut rng) % DAY_S;
            plans.push(one_off(format!("t{k:07}"), start, &mut rng));
        }
    }

    let horizon = warmup + day;
    let mut calls: Vec<CallRecord> = plans
        .into_iter()
        .map(|p| expand(cfg, &samplers, p, horizon, &mut rng))
        .collect();
    calls.sort_by(|a, b| (a.start_s, &a.call_id).cmp(&(b.start_s, &b.call_id)));
    Ok(CallTrace {
        duration_s: horizon,
        warmup_s: warmup,
        seed: cfg.seed,
        calls,
    })
}

fn sample_size(fit: &LogNormalFit, cap: u32, rng: &mut impl Rng) -> u32 {
    let z: f64 = rng.sample(StandardNormal);
    ((fit.mu + fit.sigma * z).exp().round() as u32).clamp(1, cap)
}

fn sample_length(cfg: &TraceGenConfig, idx: usize, rng: &mut impl Rng) -> u32 {
    let scheduled = cfg.call_minutes[idx].0 * 60.0;
    (scheduled * rng.random_range(0.75..1.1)).round().max(60.0) as u32
}

/// Offset of a call start within the reported day.
fn sample_arrival(cfg: &TraceGenConfig, s: &Samplers, rng: &mut impl Rng) -> u32 {
    let day = cfg.duration_s as f64;
    let t = if rng.random_bool(cfg.burst.weight) {
        let mark = pick(&s.mark_cdf, rng) as f64 * HALF_HOUR_S as f64;
        let jitter: f64 = Normal::new(0.0, cfg.burst.sigma_s)
            .expect("sigma validated")
            .sample(rng);
        (mark + jitter).round()
    } else {
        let hour = pick(&s.hour_cdf, rng) as f64;
        hour * 3600.0 + rng.random_range(0.0..3600.0f64).floor()
    };
    t.clamp(0.0, day - 1.0) as u32
}

fn occurrence(
    cfg: &TraceGenConfig,
    series: &SeriesPlan,
    call_id: String,
    series_id: String,
    start_s: u32,
    rng: &mut impl Rng,
) -> CallPlan {
    let jitter: f64 = if series.sigma > 0.0 {
        series.sigma * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    };
    let size = (series.base_size + jitter)
        .round()
        .clamp(1.0, cfg.max_participants_cap as f64) as u32;
    CallPlan {
        call_id,
        series_id: Some(series_id),
        start_s,
        length_s: sample_length(cfg, series.minutes_idx, rng),
        participants: size,
        video_propensity: series.video_propensity,
    }
}

/// Expands a call plan into a validated event list.
fn expand(
    cfg: &TraceGenConfig,
    s: &Samplers,
    plan: CallPlan,
    horizon: u32,
    rng: &mut impl Rng,
) -> CallRecord {
    let n = plan.participants as usize;
    let len = plan.length_s;
    let joiner = if n >= 2 {
        let z: f64 = rng.sample(StandardNormal);
        (s.joiner.at(z).round() as u32).min(len.saturating_sub(60))
    } else {
        0
    };
    let mut joins: Vec<u32> = Vec::with_capacity(n);
    joins.push(0);
    for _ in 2..n {
        joins.push(rng.random_range(0..=joiner));
    }
    if n >= 2 {
        joins.push(joiner);
    }
    joins.sort_unstable();

    // (time, participant, local order, action)
    let mut evs: Vec<(u32, u32, u8, Action)> = Vec::with_capacity(n * 4);
    let sharer = if n >= 2 && rng.random_bool(cfg.p_screen_share) {
        Some(rng.random_range(0..n))
    } else {
        None
    };
    for (i, &join) in joins.iter().enumerate() {
        let p = i as u32;
        let natural_leave = len - rng.random_range(0..=len.min(60));
        let leave = if rng.random_bool(cfg.p_early_leave) && natural_leave > joiner + 1 {
            rng.random_range(joiner.max(join) + 1..=natural_leave)
        } else {
            natural_leave
        }
        .max(join);
        let mut seq = 0u8;
        let mut push = |t: u32, a: Action, evs: &mut Vec<_>| {
            evs.push((t, p, seq, a));
            seq += 1;
        };
        push(join, Action::Join, &mut evs);
        push(
            join,
            Action::MediaStart(Media::new(MediaKind::Audio, cfg.audio_mbps)),
            &mut evs,
        );
        if rng.random_bool(plan.video_propensity) {
            let on = (join + rng.random_range(0..=20)).min(leave);
            push(
                on,
                Action::MediaStart(Media::new(MediaKind::Video, cfg.video_mbps)),
                &mut evs,
            );
            let off = if rng.random_bool(cfg.p_video_off) && leave > on + 1 {
                Some(rng.random_range(on + 1..leave))
            } else {
                None
            };
            let end = off.unwrap_or(leave);
            if rng.random_bool(cfg.p_quality_change) && end > on + 1 {
                let t = rng.random_range(on + 1..end);
                push(
                    t,
                    Action::MediaQualityChange(Media::new(MediaKind::Video, cfg.hd_video_mbps)),
                    &mut evs,
                );
            }
            if let Some(off) = off {
                push(off, Action::MediaStop(MediaKind::Video), &mut evs);
            }
        }
        if sharer == Some(i) && leave > join + 2 {
            let a = rng.random_range(join + 1..leave);
            let b = (a + rng.random_range(120..=900)).min(leave);
            push(
                a,
                Action::MediaStart(Media::new(MediaKind::ScreenShare, cfg.screen_share_mbps)),
                &mut evs,
            );
            if b < leave {
                push(b, Action::MediaStop(MediaKind::ScreenShare), &mut evs);
            }
        }
        push(leave, Action::Leave, &mut evs);
    }
    evs.sort_by_key(|e| (e.0, e.1, e.2));

    let last = horizon - 1;
    let clamp = |t: u32| (plan.start_s + t).min(last);
    let end_s = evs.iter().map(|e| clamp(e.0)).max().unwrap_or(plan.start_s.min(last));
    let mut participants: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
    participants.shrink_to_fit();
    CallRecord {
        call_id: plan.call_id,
        series_id: plan.series_id,
        start_s: plan.start_s.min(last),
        end_s,
        participants,
        events: evs
            .into_iter()
            .map(|(t, p, _, action)| ParticipantEvent {
                time_s: clamp(t),
                participant: p,
                action,
            })
            .collect(),
    }
}
