use proptest::prelude::*;

use trainscape::data::{build_vocab, extract_sequences, make_batches};
use trainscape::fractal::{box_count_dimension, sobel_edges, EdgeThreshold, RasterImage};
use trainscape::render::{colormap_pixel, decode_ppm, encode_ppm, RgbImage};
use trainscape::training::{convergence_measure, evaluate, normalize_losses, ConvergenceCriteria};

fn binary_image(max_log_side: u32) -> impl Strategy<Value = RasterImage> {
    (1..=max_log_side)
        .prop_flat_map(|k| {
            let side = 1usize << k;
            (
                Just(side),
                prop::collection::vec(prop::bool::weighted(0.3), side * side),
            )
        })
        .prop_filter("non-empty", |(_, px)| px.iter().any(|&b| b))
        .prop_map(|(side, px)| RasterImage::binary(side, side, px).unwrap())
}

fn any_binary(max_w: usize, max_h: usize) -> impl Strategy<Value = RasterImage> {
    (3..=max_w, 3..=max_h).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<bool>(), w * h)
            .prop_map(move |px| RasterImage::binary(w, h, px).unwrap())
    })
}

fn raw_loss() -> impl Strategy<Value = f64> {
    prop_oneof![
        8 => 0.0..20.0f64,
        1 => Just(f64::NAN),
        1 => Just(f64::INFINITY),
        1 => Just(-1.0),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mu_stays_in_range(raw in prop::collection::vec(raw_loss(), 1..300), extra in 0usize..50) {
        let criteria = ConvergenceCriteria::default();
        let n = (raw.len() + extra).max(20);
        let normalized = normalize_losses(&raw, n, criteria.max_loss);
        prop_assert!(normalized.iter().all(|l| (0.0..=criteria.max_loss).contains(l)));
        let report = evaluate(&normalized, &criteria).unwrap();
        prop_assert!((-1.0..=1.0).contains(&report.mu), "{}", report.mu);
    }

    #[test]
    fn mu_does_not_increase_with_the_area(
        base in prop::collection::vec(0.0..10.0f64, 2..100),
        bumps in prop::collection::vec((0usize..100, 0.0..2.0f64), 1..10),
        converged in any::<bool>(),
    ) {
        let mut higher = base.clone();
        for (i, d) in bumps {
            let i = i % higher.len();
            higher[i] = (higher[i] + d).min(10.0);
        }
        let lo = convergence_measure(&base, converged, 0.4, 10.0).unwrap();
        let hi = convergence_measure(&higher, converged, 0.4, 10.0).unwrap();
        prop_assert!(hi <= lo, "{hi} > {lo}");
    }

    #[test]
    fn box_counts_ignore_transpose_and_half_turn(img in binary_image(6)) {
        let a = box_count_dimension(&img, None).unwrap();
        let t = box_count_dimension(&img.transposed(), None).unwrap();
        let r = box_count_dimension(&img.rotated_180(), None).unwrap();
        prop_assert_eq!(&a.counts, &t.counts);
        prop_assert_eq!(&a.counts, &r.counts);
    }

    #[test]
    fn dimension_in_range_and_counts_monotone(img in binary_image(7)) {
        let side = img.width();
        let sizes: Vec<usize> = (0..).map(|k| 1usize << k).take_while(|&s| s <= side).collect();
        let est = box_count_dimension(&img, Some(&sizes)).unwrap();
        prop_assert!(est.slope >= -1e-9 && est.slope <= 2.0 + 1e-9, "{}", est.slope);
        prop_assert!(est.counts.iter().all(|&(_, n)| n >= 1));
        prop_assert!(est.counts.windows(2).all(|w| w[0].1 >= w[1].1));
        let default = box_count_dimension(&img, None).unwrap();
        prop_assert!((-1e-9..=2.0 + 1e-9).contains(&default.slope));
    }

    #[test]
    fn sobel_edges_sit_on_non_constant_neighbourhoods(img in any_binary(20, 20)) {
        let edges = sobel_edges(&img, EdgeThreshold::default_for(&img)).unwrap();
        prop_assert_eq!((edges.width(), edges.height()), (img.width(), img.height()));
        let (w, h) = (img.width() as i64, img.height() as i64);
        let at = |x: i64, y: i64| img.is_set(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize);
        for y in 0..h {
            for x in 0..w {
                if edges.is_set(x as usize, y as usize) {
                    let centre = at(x, y);
                    let varies = (-1..=1).any(|dy| (-1..=1).any(|dx| at(x + dx, y + dy) != centre));
                    prop_assert!(varies, "edge at ({x},{y}) on a flat patch");
                }
            }
        }
    }

    #[test]
    fn ppm_encoding_round_trips(
        (w, h, px) in (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            (Just(w), Just(h), prop::collection::vec(any::<[u8; 3]>(), w * h))
        })
    ) {
        let img = RgbImage::new(w, h, px).unwrap();
        let bytes = encode_ppm(&img);
        prop_assert_eq!(decode_ppm("p.ppm".as_ref(), &bytes).unwrap(), img);
    }

    #[test]
    fn colormap_channels_move_one_way(a in -1.0..=1.0f64, b in -1.0..=1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (p, q) = (colormap_pixel(lo).unwrap(), colormap_pixel(hi).unwrap());
        prop_assert!(q[0] <= p[0]);
        prop_assert!(q[2] >= p[2]);
    }

    #[test]
    fn vocab_round_trips(text in "[a-zA-Z ,.;!?\n'é—]{1,200}") {
        let vocab = build_vocab(&text).unwrap();
        prop_assert!(vocab.chars().windows(2).all(|w| w[0] < w[1]));
        let ids = vocab.encode(&text).unwrap();
        prop_assert_eq!(ids.len(), text.chars().count());
        prop_assert_eq!(vocab.decode(&ids).unwrap(), text);
        let all: Vec<usize> = (0..vocab.len()).collect();
        prop_assert_eq!(vocab.encode(&vocab.decode(&all).unwrap()).unwrap(), all);
    }

    #[test]
    fn batch_order_depends_only_on_its_inputs(
        len in 40usize..200,
        batch in 1usize..8,
        seed in any::<u64>(),
        steps in 1usize..60,
    ) {
        let stream: Vec<u32> = (0..len as u32).map(|i| i % 13).collect();
        let seqs = extract_sequences(stream.clone(), 9, 3).unwrap();
        let again = extract_sequences(stream, 9, 3).unwrap();
        let a = make_batches(&seqs, batch.min(seqs.len()), seed, steps).unwrap();
        let b = make_batches(&again, batch.min(seqs.len()), seed, steps).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.steps(), steps);
    }
}
