//! Brute-force AP oracle on integer grids, in exact rational arithmetic.
//!
//! Every partial one-to-one assignment of detections to ground truth is
//! enumerated and the unique one satisfying the greedy conditions is kept:
//! taking detections by descending score (ties by input order), a matched
//! detection holds the free box of highest IoU (lowest index on ties) with IoU at
//! or above the threshold, and an unmatched one had no such free box.

use num_rational::Ratio;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rationale_bench::detection::Detection;
use rationale_bench::BoundingBox;

pub type Q = Ratio<i64>;

#[derive(Debug, Clone, Copy)]
pub struct GridBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl GridBox {
    pub fn to_box(self) -> BoundingBox {
        BoundingBox::new(self.x as f64, self.y as f64, self.w as f64, self.h as f64).unwrap()
    }
}

pub struct Instance {
    pub dets: Vec<(GridBox, f64)>,
    pub gts: Vec<GridBox>,
}

impl Instance {
    pub fn detections(&self) -> Vec<Detection> {
        self.dets
            .iter()
            .map(|(b, s)| Detection::new(b.to_box(), *s).unwrap())
            .collect()
    }

    pub fn ground_truth(&self) -> Vec<BoundingBox> {
        self.gts.iter().map(|b| b.to_box()).collect()
    }
}

fn grid_box(rng: &mut ChaCha8Rng, grid: i64) -> GridBox {
    let x = rng.random_range(0..grid);
    let y = rng.random_range(0..grid);
    GridBox {
        x,
        y,
        w: rng.random_range(1..=grid - x),
        h: rng.random_range(1..=grid - y),
    }
}

/// Up to `max_dets` detections and `max_gts` ground-truth boxes on a `grid`×`grid`
/// board. Scores come from a five-value set so ties are common.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_dets: usize,
    max_gts: usize,
    grid: i64,
) -> Instance {
    let nd = rng.random_range(0..=max_dets);
    let ng = rng.random_range(0..=max_gts);
    // Nudge detections toward ground truth so matches are not rare.
    let gts: Vec<GridBox> = (0..ng).map(|_| grid_box(rng, grid)).collect();
    let dets = (0..nd)
        .map(|_| {
            let b = if !gts.is_empty() && rng.random_bool(0.5) {
                let g = gts[rng.random_range(0..gts.len())];
                let w = (g.w + rng.random_range(-1..=1)).clamp(1, grid - g.x);
                let h = (g.h + rng.random_range(-1..=1)).clamp(1, grid - g.y);
                GridBox { w, h, ..g }
            } else {
                grid_box(rng, grid)
            };
            (b, f64::from(rng.random_range(1..=5u8)) / 10.0)
        })
        .collect();
    Instance { dets, gts }
}

pub fn iou(a: GridBox, b: GridBox) -> Q {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0);
    let inter = iw * ih;
    Q::new(inter, a.w * a.h + b.w * b.h - inter)
}

fn rank(dets: &[(GridBox, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // Stable sort keeps input order among equal scores.
    order.sort_by(|&i, &j| dets[j].1.partial_cmp(&dets[i].1).unwrap());
    order
}

fn assignments(nd: usize, ng: usize) -> Vec<Vec<Option<usize>>> {
    let mut out = vec![Vec::new()];
    for _ in 0..nd {
        let mut next = Vec::new();
        for partial in &out {
            next.push([partial.clone(), vec![None]].concat());
            for g in 0..ng {
                if !partial.contains(&Some(g)) {
                    next.push([partial.clone(), vec![Some(g)]].concat());
                }
            }
        }
        out = next;
    }
    out
}

fn is_greedy(inst: &Instance, order: &[usize], assign: &[Option<usize>], thr: Q) -> bool {
    let mut taken = vec![false; inst.gts.len()];
    for &d in order {
        let free_best = (0..inst.gts.len())
            .filter(|&g| !taken[g])
            .map(|g| (iou(inst.dets[d].0, inst.gts[g]), g))
            .filter(|(v, _)| *v >= thr)
            // highest IoU, then lowest index
            .min_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        match (assign[d], free_best) {
            (Some(g), Some((_, best))) if g == best => taken[g] = true,
            (None, None) => {}
            _ => return false,
        }
    }
    true
}

/// True-positive flags in rank order, from the unique greedy-consistent assignment.
pub fn oracle_flags(inst: &Instance, thr: Q) -> Vec<bool> {
    let order = rank(&inst.dets);
    let valid: Vec<Vec<Option<usize>>> = assignments(inst.dets.len(), inst.gts.len())
        .into_iter()
        .filter(|a| is_greedy(inst, &order, a, thr))
        .collect();
    assert_eq!(valid.len(), 1, "greedy assignment must be unique");
    order.iter().map(|&d| valid[0][d].is_some()).collect()
}

/// All-point interpolated AP of rank-ordered flags, exactly.
pub fn oracle_ap(flags: &[bool], num_gt: usize) -> Q {
    if num_gt == 0 || flags.is_empty() {
        return Q::from_integer(0);
    }
    let mut tp = 0;
    let mut points = Vec::new();
    for (k, &f) in flags.iter().enumerate() {
        tp += i64::from(f);
        points.push((Q::new(tp, num_gt as i64), Q::new(tp, k as i64 + 1)));
    }
    let mut area = Q::from_integer(0);
    let mut prev = Q::from_integer(0);
    for i in 0..points.len() {
        let (recall, _) = points[i];
        if recall > prev {
            let best = points[i..].iter().map(|p| p.1).max().unwrap();
            area += (recall - prev) * best;
            prev = recall;
        }
    }
    area
}

pub fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}
