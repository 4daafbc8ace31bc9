//! Cost-model planning and discrete-event simulation of the head-wise
//! accelerator pipeline.
//!
//! Per head three stages run in order: the fused int8 estimation launch
//! (accelerator), then top-k and sparse QKV on the general-purpose lane.
//! Same-bucket heads fuse into one launch. The planner greedily picks, at
//! each step, the fused group (and head order inside it) that minimizes
//! the current pipeline finish time; a permutation-capped brute-force
//! planner serves as the oracle.
//!
//! Clocks are logical milliseconds from the cost profile. The default
//! model keeps separate top-k and qkv clocks as in the planning
//! recurrences, which lets top-k of one head overlap qkv of another; the
//! single-lane variant serializes both stages on one clock.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-stage timing model. `qkv_ms` is each head's effective sparse-QKV
/// time, i.e. already scaled by that head's sparsity ratio.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostProfile {
    /// Measured (fused head count, milliseconds) points for one launch.
    pub npu_points: Vec<(usize, f64)>,
    /// Per-head top-k time on the general-purpose lane.
    pub topk_ms: Vec<f64>,
    /// Per-head sparse-QKV time on the general-purpose lane.
    pub qkv_ms: Vec<f64>,
}

impl CostProfile {
    pub fn validate(&self) -> Result<()> {
        if self.npu_points.is_empty() {
            return Err(Error::validation("cost profile needs at least one npu point"));
        }
        let mut prev: Option<(usize, f64)> = None;
        for &(n, t) in &self.npu_points {
            if n == 0 || !(t > 0.0) {
                return Err(Error::validation("npu points must have positive count and time"));
            }
            if let Some((pn, pt)) = prev {
                if n <= pn || t < pt {
                    return Err(Error::validation(
                        "npu points must be strictly increasing in count and nondecreasing in time",
                    ));
                }
            }
            prev = Some((n, t));
        }
        if self.topk_ms.len() != self.qkv_ms.len() {
            return Err(Error::validation("topk/qkv per-head lists must have equal length"));
        }
        if self.topk_ms.iter().chain(&self.qkv_ms).any(|&t| !(t > 0.0)) {
            return Err(Error::validation("stage times must be positive"));
        }
        Ok(())
    }

    pub fn num_heads(&self) -> usize {
        self.topk_ms.len()
    }
}

/// Fused-launch cost: piecewise-linear between measured points, flat
/// below the first point, last marginal cost continued beyond the last.
pub fn npu_time_of(profile: &CostProfile, head_count: usize) -> f64 {
    let pts = &profile.npu_points;
    let x = head_count as f64;
    if head_count <= pts[0].0 {
        return pts[0].1;
    }
    for w in pts.windows(2) {
        let (x0, y0) = (w[0].0 as f64, w[0].1);
        let (x1, y1) = (w[1].0 as f64, w[1].1);
        if x <= x1 {
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    let n = pts.len();
    if n == 1 {
        return pts[0].1;
    }
    let (x0, y0) = (pts[n - 2].0 as f64, pts[n - 2].1);
    let (x1, y1) = (pts[n - 1].0 as f64, pts[n - 1].1);
    let slope = (y1 - y0) / (x1 - x0);
    y1 + slope * (x - x1)
}

/// Heads sharing one scale bucket, launched together. `npu_ms` pins a
/// measured launch cost for this group; when absent the cost comes from
/// the profile's head-count lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedGroup {
    pub bucket: usize,
    pub heads: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub npu_ms: Option<f64>,
}

impl FusedGroup {
    pub fn new(bucket: usize, heads: Vec<usize>) -> Self {
        FusedGroup { bucket, heads, npu_ms: None }
    }

    pub fn with_launch_cost(bucket: usize, heads: Vec<usize>, npu_ms: f64) -> Self {
        FusedGroup { bucket, heads, npu_ms: Some(npu_ms) }
    }

    fn launch_cost(&self, profile: &CostProfile) -> f64 {
        self.npu_ms.unwrap_or_else(|| npu_time_of(profile, self.heads.len()))
    }
}

/// Group heads by bucket index; groups ordered by ascending bucket,
/// heads ascending within each group.
pub fn form_groups(head_buckets: &[usize]) -> Vec<FusedGroup> {
    let mut by_bucket: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (head, &bucket) in head_buckets.iter().enumerate() {
        by_bucket.entry(bucket).or_default().push(head);
    }
    by_bucket
        .into_iter()
        .map(|(bucket, heads)| FusedGroup::new(bucket, heads))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneModel {
    /// Independent top-k and qkv clocks, as in the planning recurrences.
    #[default]
    ThreeClock,
    /// One general-purpose clock; top-k and qkv never overlap.
    SingleLane,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Npu,
    TopK,
    Qkv,
}

/// One simulated execution interval. `id` is the group index for npu
/// events and the head id otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub stage: Stage,
    pub id: usize,
    pub start: f64,
    pub finish: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schedule {
    /// Fused groups in launch order; heads inside each group in cpu order.
    pub npu_order: Vec<FusedGroup>,
    /// Flattened head order on the general-purpose lane.
    pub cpu_order: Vec<usize>,
    pub lane: LaneModel,
    /// Fully serialized execution (no cross-stage overlap).
    pub serialized: bool,
    pub events: Vec<Event>,
    pub makespan: f64,
}

#[derive(Debug, Clone, Copy)]
struct Clocks {
    npu: f64,
    topk: f64,
    qkv: f64,
}

/// Advance the cpu-side clocks for one head; returns (topk_start, qkv_start).
fn advance_head(
    clocks: &mut Clocks,
    group_npu_finish: f64,
    topk_ms: f64,
    qkv_ms: f64,
    lane: LaneModel,
) -> (f64, f64) {
    match lane {
        LaneModel::ThreeClock => {
            // t_topk = max(t_npu, t_topk) + topk; t_qkv = max(t_qkv, t_topk) + qkv
            let topk_start = group_npu_finish.max(clocks.topk);
            clocks.topk = topk_start + topk_ms;
            let qkv_start = clocks.qkv.max(clocks.topk);
            clocks.qkv = qkv_start + qkv_ms;
            (topk_start, qkv_start)
        }
        LaneModel::SingleLane => {
            let topk_start = group_npu_finish.max(clocks.qkv);
            let qkv_start = topk_start + topk_ms;
            clocks.topk = qkv_start;
            clocks.qkv = qkv_start + qkv_ms;
            (topk_start, qkv_start)
        }
    }
}

/// Greedy head ordering within one fused group (the inner planning loop):
/// repeatedly take the unscheduled head whose recurrence yields the
/// smallest qkv finish time, ties to the lower head id.
fn plan_group_heads(
    clocks: Clocks,
    group_npu_finish: f64,
    heads: &[usize],
    profile: &CostProfile,
    lane: LaneModel,
) -> (Vec<usize>, Clocks) {
    let mut clocks = clocks;
    let mut order = Vec::with_capacity(heads.len());
    let mut remaining: Vec<usize> = heads.to_vec();
    while !remaining.is_empty() {
        let mut best_pos = 0;
        let mut best_t = f64::INFINITY;
        for (pos, &head) in remaining.iter().enumerate() {
            let mut trial = clocks;
            advance_head(&mut trial, group_npu_finish, profile.topk_ms[head], profile.qkv_ms[head], lane);
            if trial.qkv < best_t {
                best_t = trial.qkv;
                best_pos = pos;
            }
        }
        let head = remaining.remove(best_pos);
        advance_head(&mut clocks, group_npu_finish, profile.topk_ms[head], profile.qkv_ms[head], lane);
        order.push(head);
    }
    (order, clocks)
}

/// Replay a committed (group, head) order under the pipeline recurrences,
/// producing events and the makespan.
fn evaluate_order(order: &[FusedGroup], profile: &CostProfile, lane: LaneModel) -> (Vec<Event>, f64) {
    let mut clocks = Clocks { npu: 0.0, topk: 0.0, qkv: 0.0 };
    let mut events = Vec::new();
    for (gi, group) in order.iter().enumerate() {
        let launch = group.launch_cost(profile);
        let npu_start = clocks.npu;
        clocks.npu += launch;
        events.push(Event { stage: Stage::Npu, id: gi, start: npu_start, finish: clocks.npu });
        let npu_finish = clocks.npu;
        for &head in &group.heads {
            let (topk_start, qkv_start) =
                advance_head(&mut clocks, npu_finish, profile.topk_ms[head], profile.qkv_ms[head], lane);
            events.push(Event {
                stage: Stage::TopK,
                id: head,
                start: topk_start,
                finish: topk_start + profile.topk_ms[head],
            });
            events.push(Event {
                stage: Stage::Qkv,
                id: head,
                start: qkv_start,
                finish: qkv_start + profile.qkv_ms[head],
            });
        }
    }
    (events, clocks.qkv)
}

fn evaluate_serialized(order: &[FusedGroup], profile: &CostProfile) -> (Vec<Event>, f64) {
    let mut t = 0.0;
    let mut events = Vec::new();
    for (gi, group) in order.iter().enumerate() {
        let launch = group.launch_cost(profile);
        events.push(Event { stage: Stage::Npu, id: gi, start: t, finish: t + launch });
        t += launch;
        for &head in &group.heads {
            events.push(Event { stage: Stage::TopK, id: head, start: t, finish: t + profile.topk_ms[head] });
            t += profile.topk_ms[head];
            events.push(Event { stage: Stage::Qkv, id: head, start: t, finish: t + profile.qkv_ms[head] });
            t += profile.qkv_ms[head];
        }
    }
    (events, t)
}

fn make_schedule(order: Vec<FusedGroup>, profile: &CostProfile, lane: LaneModel, serialized: bool) -> Schedule {
    let (events, makespan) = if serialized {
        evaluate_serialized(&order, profile)
    } else {
        evaluate_order(&order, profile, lane)
    };
    let cpu_order = order.iter().flat_map(|g| g.heads.iter().cloned()).collect();
    Schedule { npu_order: order, cpu_order, lane, serialized, events, makespan }
}

fn check_instance(groups: &[FusedGroup], profile: &CostProfile) -> Result<()> {
    profile.validate()?;
    if groups.is_empty() || groups.iter().any(|g| g.heads.is_empty()) {
        return Err(Error::validation("planner needs non-empty groups"));
    }
    let n = profile.num_heads();
    for g in groups {
        if let Some(ms) = g.npu_ms {
            if !(ms > 0.0) {
                return Err(Error::validation("group launch cost must be positive"));
            }
        }
        for &h in &g.heads {
            if h >= n {
                return Err(Error::validation(format!("head {h} missing from cost profile")));
            }
        }
    }
    Ok(())
}

/// Greedy pipeline planner: at every step, commit the unscheduled fused
/// group (with greedily ordered heads) that minimizes the resulting qkv
/// finish time. Ties break to the lower group index.
pub fn plan_greedy(groups: &[FusedGroup], profile: &CostProfile, lane: LaneModel) -> Result<Schedule> {
    check_instance(groups, profile)?;
    let mut clocks = Clocks { npu: 0.0, topk: 0.0, qkv: 0.0 };
    let mut remaining: Vec<&FusedGroup> = groups.iter().collect();
    let mut order: Vec<FusedGroup> = Vec::with_capacity(groups.len());
    while !remaining.is_empty() {
        let mut best_pos = 0;
        let mut best_t = f64::INFINITY;
        let mut best_heads: Vec<usize> = Vec::new();
        let mut best_clocks = clocks;
        for (pos, group) in remaining.iter().enumerate() {
            let npu_new = clocks.npu + group.launch_cost(profile);
            let trial = Clocks { npu: npu_new, ..clocks };
            let (heads, after) = plan_group_heads(trial, npu_new, &group.heads, profile, lane);
            if after.qkv < best_t {
                best_t = after.qkv;
                best_pos = pos;
                best_heads = heads;
                best_clocks = after;
            }
        }
        let group = remaining.remove(best_pos);
        clocks = best_clocks;
        order.push(FusedGroup { bucket: group.bucket, heads: best_heads, npu_ms: group.npu_ms });
    }
    Ok(make_schedule(order, profile, lane, false))
}

pub const DEFAULT_BRUTE_FORCE_LIMIT: u128 = 1_000_000;

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

fn permutations_of(items: &[usize]) -> Vec<Vec<usize>> {
    fn rec(acc: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(acc.clone());
            return;
        }
        for i in 0..rest.len() {
            let item = rest.remove(i);
            acc.push(item);
            rec(acc, rest, out);
            acc.pop();
            rest.insert(i, item);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut items.to_vec(), &mut out);
    out
}

/// Exhaustive minimum-makespan search over group orders x within-group
/// head orders, refused above `limit` total permutations.
pub fn plan_bruteforce(
    groups: &[FusedGroup],
    profile: &CostProfile,
    lane: LaneModel,
    limit: u128,
) -> Result<Schedule> {
    check_instance(groups, profile)?;
    let mut count = factorial(groups.len());
    for g in groups {
        count = count.saturating_mul(factorial(g.heads.len()));
    }
    if count > limit {
        return Err(Error::SearchLimit(count, limit));
    }

    let head_perms: Vec<Vec<Vec<usize>>> =
        groups.iter().map(|g| permutations_of(&g.heads)).collect();

    let mut best: Option<(f64, Vec<FusedGroup>)> = None;
    for gperm in permutations_of(&(0..groups.len()).collect::<Vec<_>>()) {
        // depth-first over per-group head orders
        fn expand(
            gperm: &[usize],
            depth: usize,
            acc: &mut Vec<FusedGroup>,
            groups: &[FusedGroup],
            head_perms: &[Vec<Vec<usize>>],
            profile: &CostProfile,
            lane: LaneModel,
            best: &mut Option<(f64, Vec<FusedGroup>)>,
        ) {
            if depth == gperm.len() {
                let (_, makespan) = evaluate_order(acc, profile, lane);
                if best.as_ref().map_or(true, |(b, _)| makespan < *b) {
                    *best = Some((makespan, acc.clone()));
                }
                return;
            }
            let gi = gperm[depth];
            for heads in &head_perms[gi] {
                acc.push(FusedGroup {
                    bucket: groups[gi].bucket,
                    heads: heads.clone(),
                    npu_ms: groups[gi].npu_ms,
                });
                expand(gperm, depth + 1, acc, groups, head_perms, profile, lane, best);
                acc.pop();
            }
        }
        expand(&gperm, 0, &mut Vec::new(), groups, &head_perms, profile, lane, &mut best);
    }

    let (_, order) = best.expect("non-empty instance");
    Ok(make_schedule(order, profile, lane, false))
}

/// Fully serialized baseline: every stage back to back, no overlap.
pub fn plan_sequential(groups: &[FusedGroup], profile: &CostProfile) -> Result<Schedule> {
    check_instance(groups, profile)?;
    Ok(make_schedule(groups.to_vec(), profile, LaneModel::ThreeClock, true))
}

/// Sum of all stage times; the makespan of any serialized schedule.
pub fn serialized_makespan(groups: &[FusedGroup], profile: &CostProfile) -> f64 {
    let mut t = 0.0;
    for g in groups {
        t += g.launch_cost(profile);
        for &h in &g.heads {
            t += profile.topk_ms[h] + profile.qkv_ms[h];
        }
    }
    t
}

/// Per-stage busy time and latency-breakdown fractions.
#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub makespan: f64,
    pub npu_busy: f64,
    pub topk_busy: f64,
    pub qkv_busy: f64,
    /// idle time on the qkv clock before the last qkv event finishes
    pub bubble: f64,
    pub npu_fraction: f64,
    pub topk_fraction: f64,
    pub qkv_fraction: f64,
}

/// Replay a schedule from its orders alone, verify it against the stored
/// events and makespan, and report the latency breakdown.
pub fn simulate(schedule: &Schedule, profile: &CostProfile) -> Result<SimReport> {
    profile.validate()?;
    let (events, makespan) = if schedule.serialized {
        evaluate_serialized(&schedule.npu_order, profile)
    } else {
        evaluate_order(&schedule.npu_order, profile, schedule.lane)
    };
    if makespan != schedule.makespan {
        return Err(Error::ScheduleInvalid(format!(
            "recomputed makespan {makespan} != planner makespan {}",
            schedule.makespan
        )));
    }
    if events != schedule.events {
        return Err(Error::ScheduleInvalid("stored events diverge from replay".into()));
    }
    validate_events(schedule)?;
    let mut busy = [0.0f64; 3];
    for e in &events {
        let i = match e.stage {
            Stage::Npu => 0,
            Stage::TopK => 1,
            Stage::Qkv => 2,
        };
        busy[i] += e.finish - e.start;
    }
    let total: f64 = busy.iter().sum();
    Ok(SimReport {
        makespan,
        npu_busy: busy[0],
        topk_busy: busy[1],
        qkv_busy: busy[2],
        bubble: makespan - busy[2],
        npu_fraction: busy[0] / total,
        topk_fraction: busy[1] / total,
        qkv_fraction: busy[2] / total,
    })
}

/// Dependency and occupancy checks: per head topk starts after its
/// group's launch finishes, qkv after its topk, and no two events overlap
/// on the same resource.
fn validate_events(schedule: &Schedule) -> Result<()> {
    let mut npu_finish_of_head = std::collections::HashMap::new();
    for (gi, g) in schedule.npu_order.iter().enumerate() {
        let e = schedule
            .events
            .iter()
            .find(|e| e.stage == Stage::Npu && e.id == gi)
            .ok_or_else(|| Error::ScheduleInvalid(format!("missing npu event for group {gi}")))?;
        for &h in &g.heads {
            npu_finish_of_head.insert(h, e.finish);
        }
    }
    let find = |stage: Stage, id: usize| -> Result<&Event> {
        schedule
            .events
            .iter()
            .find(|e| e.stage == stage && e.id == id)
            .ok_or_else(|| Error::ScheduleInvalid(format!("missing {stage:?} event for {id}")))
    };
    for &h in &schedule.cpu_order {
        let topk = find(Stage::TopK, h)?;
        let qkv = find(Stage::Qkv, h)?;
        let npu_finish = npu_finish_of_head
            .get(&h)
            .ok_or_else(|| Error::ScheduleInvalid(format!("head {h} not in any group")))?;
        if topk.start < *npu_finish || qkv.start < topk.finish {
            return Err(Error::ScheduleInvalid(format!("dependency violated for head {h}")));
        }
    }
    let lanes: &[&[Stage]] = if schedule.serialized || schedule.lane == LaneModel::SingleLane {
        &[&[Stage::Npu], &[Stage::TopK, Stage::Qkv]]
    } else {
        &[&[Stage::Npu], &[Stage::TopK], &[Stage::Qkv]]
    };
    for lane_stages in lanes {
        let mut intervals: Vec<(f64, f64)> = schedule
            .events
            .iter()
            .filter(|e| lane_stages.contains(&e.stage))
            .map(|e| (e.start, e.finish))
            .collect();
        intervals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in intervals.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::ScheduleInvalid(format!(
                    "overlapping events on one resource: {:?} and {:?}",
                    w[0], w[1]
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(topk: Vec<f64>, qkv: Vec<f64>) -> CostProfile {
        let p = CostProfile { npu_points: vec![(1, 1.0)], topk_ms: topk, qkv_ms: qkv };
        p.validate().unwrap();
        p
    }

    /// A(npu 1; head 0: topk 1, qkv 5), B(npu 5; head 1: topk 1, qkv 1).
    fn worked_instance() -> (Vec<FusedGroup>, CostProfile) {
        let p = profile(vec![1.0, 1.0], vec![5.0, 1.0]);
        let groups = vec![
            FusedGroup::with_launch_cost(0, vec![0], 1.0),
            FusedGroup::with_launch_cost(1, vec![1], 5.0),
        ];
        (groups, p)
    }

    #[test]
    fn npu_interpolation_and_extrapolation() {
        let p = CostProfile {
            npu_points: vec![(1, 2.0), (2, 3.0), (4, 4.0)],
            topk_ms: vec![1.0],
            qkv_ms: vec![1.0],
        };
        assert_eq!(npu_time_of(&p, 1), 2.0);
        assert_eq!(npu_time_of(&p, 2), 3.0);
        assert_eq!(npu_time_of(&p, 3), 3.5);
        assert_eq!(npu_time_of(&p, 4), 4.0);
        assert_eq!(npu_time_of(&p, 8), 6.0);
    }

    #[test]
    fn form_groups_partitions_by_bucket() {
        let groups = form_groups(&[0, 0, 1]);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0], FusedGroup::new(0, vec![0, 1]));
        assert_eq!(groups[1], FusedGroup::new(1, vec![2]));
        let distinct = form_groups(&[2, 0, 1]);
        assert!(distinct.iter().all(|g| g.heads.len() == 1));
    }

    #[test]
    fn single_head_no_overlap_possible() {
        let p = profile(vec![1.0], vec![3.0]);
        let groups = vec![FusedGroup::with_launch_cost(0, vec![0], 2.0)];
        let s = plan_greedy(&groups, &p, LaneModel::ThreeClock).unwrap();
        assert_eq!(s.makespan, 6.0);
        let bf = plan_bruteforce(&groups, &p, LaneModel::ThreeClock, 1000).unwrap();
        assert_eq!(bf.makespan, 6.0);
    }

    #[test]
    fn worked_example_greedy_is_eight() {
        let (groups, p) = worked_instance();
        let s = plan_greedy(&groups, &p, LaneModel::ThreeClock).unwrap();
        assert_eq!(s.makespan, 8.0);
        // tie at 7 after the first step broken to group A (index 0)
        assert_eq!(s.npu_order[0].bucket, 0);
        let bf = plan_bruteforce(&groups, &p, LaneModel::ThreeClock, 1000).unwrap();
        assert_eq!(bf.makespan, 8.0);
        assert_eq!(serialized_makespan(&groups, &p), 14.0);
        let seq = plan_sequential(&groups, &p).unwrap();
        assert_eq!(seq.makespan, 14.0);
    }

    #[test]
    fn worked_example_reverse_order_costs_twelve() {
        let (groups, p) = worked_instance();
        let reversed = vec![groups[1].clone(), groups[0].clone()];
        let (_, makespan) = evaluate_order(&reversed, &p, LaneModel::ThreeClock);
        assert_eq!(makespan, 12.0);
    }

    #[test]
    fn simulate_agrees_with_planner() {
        let (groups, p) = worked_instance();
        let s = plan_greedy(&groups, &p, LaneModel::ThreeClock).unwrap();
        let rep = simulate(&s, &p).unwrap();
        assert_eq!(rep.makespan, s.makespan);
        let seq = plan_sequential(&groups, &p).unwrap();
        let rep = simulate(&seq, &p).unwrap();
        assert_eq!(rep.makespan, 14.0);
        assert_eq!(rep.bubble, 14.0 - 6.0); // qkv busy = 5 + 1
    }

    #[test]
    fn simulate_detects_tampered_makespan() {
        let (groups, p) = worked_instance();
        let mut s = plan_greedy(&groups, &p, LaneModel::ThreeClock).unwrap();
        s.makespan += 1.0;
        assert!(matches!(simulate(&s, &p), Err(Error::ScheduleInvalid(_))));
    }

    #[test]
    fn brute_force_respects_limit() {
        let p = profile(vec![1.0; 8], vec![1.0; 8]);
        let groups: Vec<FusedGroup> = (0..8).map(|i| FusedGroup::new(i, vec![i])).collect();
        // 8! = 40320 > 1000
        assert!(matches!(
            plan_bruteforce(&groups, &p, LaneModel::ThreeClock, 1000),
            Err(Error::SearchLimit(_, _))
        ));
    }

    #[test]
    fn greedy_never_beats_oracle_and_never_loses_to_serial() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let n_groups = rng.gen_range(1..=4);
            let mut groups = Vec::new();
            let mut topk = Vec::new();
            let mut qkv = Vec::new();
            let mut head = 0;
            for gi in 0..n_groups {
                let sz = rng.gen_range(1..=3);
                let heads: Vec<usize> = (head..head + sz).collect();
                head += sz;
                for _ in 0..sz {
                    topk.push(rng.gen_range(0.1..2.0));
                    qkv.push(rng.gen_range(0.1..5.0));
                }
                groups.push(FusedGroup::with_launch_cost(gi, heads, rng.gen_range(0.1..4.0)));
            }
            let p = profile(topk, qkv);
            for lane in [LaneModel::ThreeClock, LaneModel::SingleLane] {
                let g = plan_greedy(&groups, &p, lane).unwrap();
                let bf = plan_bruteforce(&groups, &p, lane, DEFAULT_BRUTE_FORCE_LIMIT).unwrap();
                let serial = serialized_makespan(&groups, &p);
                assert!(bf.makespan <= g.makespan + 1e-12);
                assert!(g.makespan <= serial + 1e-12);
                simulate(&g, &p).unwrap();
                simulate(&bf, &p).unwrap();
            }
        }
    }

    #[test]
    fn deterministic_planning() {
        let (groups, p) = worked_instance();
        let a = plan_greedy(&groups, &p, LaneModel::ThreeClock).unwrap();
        let b = plan_greedy(&groups, &p, LaneModel::ThreeClock).unwrap();
        assert_eq!(a.cpu_order, b.cpu_order);
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn single_lane_never_faster_than_three_clock() {
        let p = profile(vec![0.5, 0.7, 0.3], vec![2.0, 1.0, 1.5]);
        let groups = vec![
            FusedGroup::with_launch_cost(0, vec![0, 1], 1.0),
            FusedGroup::with_launch_cost(1, vec![2], 0.5),
        ];
        let three = plan_greedy(&groups, &p, LaneModel::ThreeClock).unwrap();
        let single = plan_greedy(&groups, &p, LaneModel::SingleLane).unwrap();
        assert!(single.makespan >= three.makespan - 1e-12);
    }
}
