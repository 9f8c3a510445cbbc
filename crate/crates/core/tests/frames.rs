use drillpath::frames::chain_to_vertebra;
use drillpath::{RigidTransform, RotationMatrix, UnitQuaternion};
use nalgebra::{Isometry3, Quaternion, Translation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_quaternion() -> impl Strategy<Value = UnitQuaternion> {
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("non-degenerate", |a| a.iter().map(|v| v * v).sum::<f64>() > 0.01)
        .prop_map(|a| {
            let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            UnitQuaternion::new(a[0] / n, a[1] / n, a[2] / n, a[3] / n).unwrap()
        })
}

fn vector(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-scale..scale).prop_map(Vector3::from)
}

fn transform() -> impl Strategy<Value = RigidTransform> {
    (unit_quaternion(), vector(500.0)).prop_map(|(q, t)| RigidTransform::from_quaternion(&q, t))
}

fn oracle(t: &RigidTransform) -> Isometry3<f64> {
    let q = t.quaternion();
    let nq = nalgebra::UnitQuaternion::from_quaternion(Quaternion::new(q.w(), q.x(), q.y(), q.z()));
    Isometry3::from_parts(Translation3::from(t.translation), nq)
}

fn assert_same(a: &RigidTransform, b: &RigidTransform) {
    let (ma, mb) = (a.rotation.matrix(), b.rotation.matrix());
    assert!((ma - mb).amax() < 1e-9, "rotation {ma} vs {mb}");
    assert!(
        (a.translation - b.translation).amax() < 1e-6,
        "translation {} vs {}",
        a.translation,
        b.translation
    );
}

fn random_quaternion(rng: &mut ChaCha8Rng) -> UnitQuaternion {
    loop {
        let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.1 {
            return UnitQuaternion::new(a[0] / n, a[1] / n, a[2] / n, a[3] / n).unwrap();
        }
    }
}

#[test]
fn quaternion_matrix_round_trip_10k() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let r = random_quaternion(&mut rng).to_rotation();
        let back = r.to_quaternion().to_rotation();
        assert!((r.matrix() - back.matrix()).amax() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn compose_matches_quaternion_oracle(a in transform(), b in transform()) {
        let ours = a.compose(&b);
        let theirs = oracle(&a) * oracle(&b);
        prop_assert!((ours.to_homogeneous() - theirs.to_homogeneous()).amax() < 1e-9);
    }

    #[test]
    fn rotation_matches_nalgebra(q in unit_quaternion(), v in vector(10.0)) {
        let nq = nalgebra::UnitQuaternion::from_quaternion(Quaternion::new(q.w(), q.x(), q.y(), q.z()));
        prop_assert!((q.to_rotation().matrix() - nq.to_rotation_matrix().matrix()).amax() < 1e-12);
        prop_assert!((q.rotate(&v) - nq * v).amax() < 1e-12);
    }

    #[test]
    fn group_axioms(a in transform(), b in transform(), c in transform()) {
        assert_same(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c)));
        assert_same(&a.compose(&RigidTransform::identity()), &a);
        assert_same(&RigidTransform::identity().compose(&a), &a);
        assert_same(&a.compose(&a.inverse()), &RigidTransform::identity());
        assert_same(&a.inverse().compose(&a), &RigidTransform::identity());
        assert_same(&a.inverse().inverse(), &a);
    }

    #[test]
    fn chain_is_associative(a in transform(), b in transform(), c in transform()) {
        let chain = chain_to_vertebra(&a, &b, &c);
        assert_same(&chain, &a.compose(&b).compose(&c));
        assert_same(&chain, &a.compose(&b.compose(&c)));
    }

    #[test]
    fn transform_point_is_isometry(t in transform(), p in vector(300.0), q in vector(300.0)) {
        let d = (p - q).norm();
        let e = (t.transform_point(&p) - t.transform_point(&q)).norm();
        prop_assert!((d - e).abs() <= 1e-9 * d.max(1.0));
    }

    #[test]
    fn canonical_sign(q in unit_quaternion()) {
        prop_assert!(q.w() >= 0.0);
        let r = q.to_rotation().to_quaternion();
        prop_assert!(r.w() >= 0.0);
        prop_assert!(q.angle_to(&r) < 1e-7);
    }

    #[test]
    fn slerp_stays_on_shortest_arc(a in unit_quaternion(), b in unit_quaternion(), t in 0.0f64..1.0) {
        let m = a.slerp(&b, t);
        let total = a.angle_to(&b);
        prop_assert!(total <= std::f64::consts::PI + 1e-12);
        prop_assert!(a.angle_to(&m) <= total + 1e-9);
        prop_assert!(m.angle_to(&b) <= total + 1e-9);
        prop_assert!((a.angle_to(&m) - t * total).abs() < 1e-7);
    }

    #[test]
    fn rejects_scaled_matrices(q in unit_quaternion(), s in 1.001f64..2.0) {
        let m = q.to_rotation().matrix() * s;
        prop_assert!(RotationMatrix::try_new(m).is_err());
    }
}
