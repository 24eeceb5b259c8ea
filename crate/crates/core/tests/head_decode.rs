use lrfuse::grid::GridSpec;
use lrfuse::head::{decode_detections, is_peak, r2l_concat, HeadOutputs};
use lrfuse::tensor::{seeded_rng, FeatureMap};
use rand::Rng;

fn grid() -> GridSpec {
    GridSpec::from_range([0.0, 0.0, -3.0], [5.0, 5.0, 3.0], [0.5, 0.5, 6.0]).unwrap()
}

fn outputs(logits: FeatureMap, offset: FeatureMap) -> HeadOutputs {
    let (h, w) = (logits.height(), logits.width());
    HeadOutputs::from_logits(
        logits,
        offset,
        FeatureMap::zeros(1, h, w),
        FeatureMap::zeros(3, h, w),
        FeatureMap::from_vec(2, h, w, [vec![0.0; h * w], vec![1.0; h * w]].concat()).unwrap(),
        FeatureMap::zeros(2, h, w),
    )
    .unwrap()
}

#[test]
fn single_peak_decodes_to_cell_center_plus_offset() {
    let mut logits = FeatureMap::from_vec(1, 10, 10, vec![-10.0; 100]).unwrap();
    logits.set(0, 7, 5, 3.0);
    let mut offset = FeatureMap::zeros(2, 10, 10);
    offset.set(0, 7, 5, 0.3);
    offset.set(1, 7, 5, -0.2);
    let dets = decode_detections(&outputs(logits, offset), &grid(), 0.5, 10);
    assert_eq!(dets.len(), 1);
    // cell (i=5, j=7) has its center at (2.75, 3.75)
    assert_eq!(dets[0].x, 2.75 + 0.3);
    assert_eq!(dets[0].y, 3.75 - 0.2);
    assert_eq!((dets[0].l, dets[0].w, dets[0].h), (1.0, 1.0, 1.0));
}

fn brute_peak(p: &[f64], h: usize, w: usize, r: usize, c: usize) -> bool {
    let v = p[r * w + c];
    for rr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
        for cc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
            let u = p[rr * w + cc];
            let earlier = (rr, cc) < (r, c);
            if u > v || (u == v && earlier) {
                return false;
            }
        }
    }
    true
}

#[test]
fn peaks_match_brute_force_scan_with_ties() {
    let mut rng = seeded_rng(6);
    for _ in 0..200 {
        let (h, w) = (rng.random_range(1..8), rng.random_range(1..8));
        // few distinct levels so equal neighbours are common
        let p: Vec<f64> = (0..h * w).map(|_| rng.random_range(0..4) as f64).collect();
        for r in 0..h {
            for c in 0..w {
                assert_eq!(
                    is_peak(&p, h, w, r, c),
                    brute_peak(&p, h, w, r, c),
                    "{p:?} at {r},{c}"
                );
            }
        }
    }
}

#[test]
fn equal_adjacent_peaks_keep_the_first() {
    let mut logits = FeatureMap::from_vec(1, 10, 10, vec![-10.0; 100]).unwrap();
    logits.set(0, 4, 4, 2.0);
    logits.set(0, 4, 5, 2.0);
    let dets = decode_detections(
        &outputs(logits, FeatureMap::zeros(2, 10, 10)),
        &grid(),
        0.5,
        10,
    );
    assert_eq!(dets.len(), 1);
    assert_eq!(dets[0].x, 2.25);
}

#[test]
fn r2l_concat_adds_96_channels() {
    let m_l = FeatureMap::zeros(64, 8, 8);
    let enhanced = FeatureMap::zeros(96, 4, 4);
    assert_eq!(r2l_concat(&m_l, &enhanced).unwrap().shape(), [160, 8, 8]);
    assert!(r2l_concat(&m_l, &FeatureMap::zeros(96, 3, 3)).is_err());
}
