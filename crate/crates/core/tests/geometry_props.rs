use proptest::prelude::*;
use sphere_dm::geometry::{generate_fibonacci, geodesic_distance, nearest_neighbors, SpherePoint};

fn point() -> impl Strategy<Value = SpherePoint> {
    (-1.0f64..1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(z, lon)| {
        let r = (1.0 - z * z).sqrt();
        SpherePoint::from_cartesian(r * lon.cos(), r * lon.sin(), z).unwrap()
    })
}

// Rotation from Euler angles z-y-z.
fn rotation(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
    let rz = |t: f64| [[t.cos(), -t.sin(), 0.0], [t.sin(), t.cos(), 0.0], [0.0, 0.0, 1.0]];
    let ry = |t: f64| [[t.cos(), 0.0, t.sin()], [0.0, 1.0, 0.0], [-t.sin(), 0.0, t.cos()]];
    let mul = |p: [[f64; 3]; 3], q: [[f64; 3]; 3]| {
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = (0..3).map(|k| p[i][k] * q[k][j]).sum();
            }
        }
        r
    };
    mul(mul(rz(a), ry(b)), rz(c))
}

proptest! {
    #[test]
    fn triangle_inequality(a in point(), b in point(), c in point()) {
        let ab = geodesic_distance(&a, &b);
        let bc = geodesic_distance(&b, &c);
        let ac = geodesic_distance(&a, &c);
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn neighbors_invariant_under_rotation(
        a in 0.0f64..6.3, b in 0.0f64..3.2, c in 0.0f64..6.3, j in 0usize..101, n in 1usize..20,
    ) {
        let x = generate_fibonacci(101).unwrap();
        let y = x.rotated(&rotation(a, b, c)).unwrap();
        let nx = nearest_neighbors(&x, j, n).unwrap();
        let ny = nearest_neighbors(&y, j, n).unwrap();
        if nx != ny {
            // only acceptable when the sets differ at a distance tie
            let d = |s: &[usize]| s.iter().map(|&k| geodesic_distance(x.point(j), x.point(k))).collect::<Vec<_>>();
            let (dx, dy) = (d(&nx), d(&ny));
            let mut sx = dx.clone();
            let mut sy = dy.clone();
            sx.sort_by(f64::total_cmp);
            sy.sort_by(f64::total_cmp);
            for (u, v) in sx.iter().zip(&sy) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
