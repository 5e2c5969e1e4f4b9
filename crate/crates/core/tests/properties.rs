use std::f64::consts::PI;
use std::io::Cursor;

use cogesture::bvh::{parse_bvh, write_bvh, MotionClip, DEFAULT_PRECISION};
use cogesture::dataset::{read_record, toy_skeleton, BlobWriter, DType};
use cogesture::diffusion::q_sample_with_alpha_bar;
use cogesture::eval::fgd;
use cogesture::features::FeatureNormalizer;
use cogesture::rotation::{
    determinant, euler_to_quaternion, euler_zyx_to_matrix, matrix_to_euler_ordered, max_abs_diff, orthonormality_error,
    quaternion_to_matrix, rot_to_6d, sixd_to_rot, Axis, Quaternion,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn angle() -> impl Strategy<Value = f64> {
    -PI..PI
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn euler_matrices_are_rotations(a in angle(), b in angle(), g in angle()) {
        let m = euler_zyx_to_matrix(a, b, g);
        prop_assert!(orthonormality_error(&m) < 1e-12);
        prop_assert!((determinant(&m) - 1.0).abs() < 1e-12);
        let q = euler_to_quaternion(a, b, g);
        prop_assert!((q.norm() - 1.0).abs() < 1e-12);
        prop_assert!(max_abs_diff(&m, &quaternion_to_matrix(&q).unwrap()) < 1e-12);
    }

    #[test]
    fn sixd_round_trips(a in angle(), b in angle(), g in angle()) {
        let m = euler_zyx_to_matrix(a, b, g);
        let back = sixd_to_rot(&rot_to_6d(&m)).unwrap();
        prop_assert!(max_abs_diff(&m, &back) < 1e-12);
    }

    #[test]
    fn sixd_projects_arbitrary_inputs_onto_rotations(v in proptest::array::uniform6(-3.0f64..3.0)) {
        // Degenerate (near-parallel) column pairs are rejected rather than projected.
        if let Ok(r) = sixd_to_rot(&v) {
            prop_assert!(orthonormality_error(&r) < 1e-10);
            prop_assert!((determinant(&r) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zyx_angles_recovered_away_from_gimbal_lock(a in angle(), b in -1.4f64..1.4, g in angle()) {
        let m = euler_zyx_to_matrix(a, b, g);
        let e = matrix_to_euler_ordered(&m, [Axis::Z, Axis::Y, Axis::X]);
        prop_assert!((e[0] - a).abs() < 1e-9 && (e[1] - b).abs() < 1e-9 && (e[2] - g).abs() < 1e-9, "{e:?}");
    }

    #[test]
    fn quaternion_sign_does_not_change_rotation(w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        let q = Quaternion::new(w, x, y, z);
        prop_assume!(q.norm() > 1e-3);
        let q = q.normalized().unwrap();
        let neg = Quaternion::new(-q.w, -q.x, -q.y, -q.z);
        prop_assert!(max_abs_diff(&quaternion_to_matrix(&q).unwrap(), &quaternion_to_matrix(&neg).unwrap()) < 1e-12);
        let back = Quaternion::from_matrix(&quaternion_to_matrix(&q).unwrap());
        prop_assert!((back.dot(&q).abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn blob_records_round_trip(values in proptest::collection::vec(-1e6f64..1e6, 1..64), pad in 0usize..3) {
        let mut w = BlobWriter::default();
        let mut refs = Vec::new();
        for _ in 0..pad {
            w.push(&[1.0], &[1], DType::F64);
        }
        refs.push(w.push(&values, &[values.len()], DType::F64));
        refs.push(w.push(&values, &[1, values.len()], DType::F32));
        let mut cur = Cursor::new(w.bytes);
        let exact = read_record(&mut cur, &refs[0], "f64").unwrap();
        prop_assert_eq!(exact.iter().copied().collect::<Vec<_>>(), values.clone());
        let rounded = read_record(&mut cur, &refs[1], "f32").unwrap();
        for (r, v) in rounded.iter().zip(&values) {
            prop_assert_eq!(*r, *v as f32 as f64);
        }
    }

    #[test]
    fn flipped_payload_byte_is_detected(values in proptest::collection::vec(-10.0f64..10.0, 1..16), at in 0usize..1000) {
        let mut w = BlobWriter::default();
        let r = w.push(&values, &[values.len()], DType::F64);
        let header = 4 + 2 + 8 + 4;
        let i = header + at % (values.len() * 8);
        w.bytes[i] ^= 0x01;
        prop_assert!(read_record(&mut Cursor::new(w.bytes), &r, "x").is_err());
    }

    #[test]
    fn normalizer_inverts(rows in 1usize..6, seed in any::<u64>()) {
        let d = 5;
        let h = |i: usize| ((seed.wrapping_add(i as u64) % 1000) as f64) / 100.0 - 5.0;
        let mean = Array1::from_shape_fn(d, h);
        let std = Array1::from_shape_fn(d, |i| 0.1 + h(i + 7).abs());
        let n = FeatureNormalizer::new(mean, std);
        let x = Array2::from_shape_fn((rows, d), |(r, c)| h(r * d + c + 13) * 3.0);
        let back = n.denormalize_rows(&n.normalize_rows(&x));
        prop_assert!((&back - &x).iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn forward_diffusion_endpoints(x in proptest::collection::vec(-5.0f64..5.0, 6), e in proptest::collection::vec(-5.0f64..5.0, 6)) {
        let x0 = Array2::from_shape_vec((2, 3), x).unwrap();
        let eps = Array2::from_shape_vec((2, 3), e).unwrap();
        prop_assert_eq!(q_sample_with_alpha_bar(x0.view(), 1.0, eps.view()), x0.clone());
        prop_assert_eq!(q_sample_with_alpha_bar(x0.view(), 0.0, eps.view()), eps);
    }

    #[test]
    fn fgd_is_symmetric_and_nonnegative(seed in any::<u64>(), shift in -2.0f64..2.0) {
        let h = |i: usize| (((seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)) >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
        let a = Array2::from_shape_fn((40, 3), |(r, c)| h(r * 3 + c));
        let b = Array2::from_shape_fn((40, 3), |(r, c)| h(1000 + r * 3 + c) * 2.0 + shift);
        let ab = fgd(a.view(), b.view()).unwrap();
        let ba = fgd(b.view(), a.view()).unwrap();
        prop_assert!(ab >= -1e-12);
        prop_assert!((ab - ba).abs() < 1e-9 * (1.0 + ab));
        prop_assert!(fgd(a.view(), a.view()).unwrap() < 1e-10);
    }

    #[test]
    fn bvh_text_round_trips(joints in 1usize..8, frames in 1usize..6, seed in any::<u32>()) {
        let skeleton = toy_skeleton(joints).unwrap();
        let c = skeleton.channel_count();
        let data = Array2::from_shape_fn((frames, c), |(f, k)| {
            let x = ((seed as usize + 31 * f + 7 * k) % 3600) as f64 / 10.0 - 180.0;
            (x * 1e4).round() / 1e4
        });
        let clip = MotionClip::new(skeleton, data, 1.0 / 30.0).unwrap();
        let back = parse_bvh(&write_bvh(&clip, DEFAULT_PRECISION)).unwrap();
        prop_assert_eq!(back.hierarchy.len(), joints);
        prop_assert!((&back.frames - &clip.frames).iter().all(|v| v.abs() <= 1e-6));
        prop_assert!((back.frame_time - clip.frame_time).abs() < 1e-9);
    }
}
