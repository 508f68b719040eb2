use lipcalc::io::*;
use lipcalc_core::derivations::{build_stencil, jacobi_matrix, Scheme};
use lipcalc_core::kuhn::LatticeField;
use lipcalc_core::space::generate_space;
use lipcalc_core::{ScalarField, SpaceSpec};

#[test]
fn space_matrix_and_weights_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let s = generate_space(&SpaceSpec::RandomPoints { n: 7, dim: 2, seed: 3 }).unwrap();
    let s = s.with_weights((1..=7).map(|i| i as f64).collect()).unwrap();
    let m = dir.path().join("d.csv");
    let w = dir.path().join("w.csv");
    write_bytes(&m, &distance_matrix_csv(&s).unwrap()).unwrap();
    write_bytes(&w, &weights_csv(&s).unwrap()).unwrap();
    let (t, spec) = read_space(&m, Some(&w)).unwrap();
    assert!(spec.is_none());
    assert_eq!(t.ids(), s.ids());
    assert_eq!(t.weights(), s.weights());
    for i in 0..7 {
        for j in 0..7 {
            assert_eq!(t.dist(i, j), s.dist(i, j));
        }
    }
    let j = dir.path().join("spec.json");
    write_json(&j, &SpaceSpec::middle_thirds(3)).unwrap();
    let (c, spec) = read_space(&j, None).unwrap();
    assert_eq!(c.len(), 8);
    assert_eq!(spec, Some(SpaceSpec::middle_thirds(3)));
}

#[test]
fn malformed_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("d.csv");
    write_bytes(&m, b"a,b\n0,1\n1\n").unwrap();
    assert!(read_space(&m, None).is_err());
    write_bytes(&m, b"a,b\n0,1\n2,0\n").unwrap();
    assert!(read_space(&m, None).is_err());
    write_bytes(&m, b"a,b\n0,1\n1,0\n").unwrap();
    let (s, _) = read_space(&m, None).unwrap();
    let f = dir.path().join("f.csv");
    write_bytes(&f, b"point_id,value\na,1\n").unwrap();
    assert!(read_field(&s, &f).is_err());
    assert_eq!(read_partial_field(&s, &f).unwrap(), vec![(0, 1.0)]);
    write_bytes(&f, b"point_id,value\nc,1\n").unwrap();
    assert!(read_partial_field(&s, &f).is_err());
    assert!(read_space(&dir.path().join("missing.csv"), None).is_err());
}

#[test]
fn fields_stencils_jacobi_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let s = generate_space(&SpaceSpec::grid_1d(0.0, 1.0, 0.125)).unwrap();
    let f = ScalarField::from_coords(&s, |c| c[0] * c[0] - 0.1).unwrap();
    let p = dir.path().join("f.csv");
    write_bytes(&p, &field_csv(&s, f.values()).unwrap()).unwrap();
    assert_eq!(read_field(&s, &p).unwrap(), f);

    let d = build_stencil(&s, &Scheme::CoordinateAxis { axis: 0 }, 0.125).unwrap();
    let p = dir.path().join("st.csv");
    write_bytes(&p, &stencil_csv(&s, &d).unwrap()).unwrap();
    let back = read_stencil(&s, &p, 0.125).unwrap();
    assert_eq!(back.stencils, d.stencils);
    assert!(read_stencil(&s, &p, 0.01).is_err());

    let jf = jacobi_matrix(&[d.clone(), d], &[f.clone(), ScalarField::coordinate(&s, 0).unwrap(), f]).unwrap();
    let p = dir.path().join("j.csv");
    write_bytes(&p, &jacobi_csv(&s, &jf).unwrap()).unwrap();
    assert_eq!(read_jacobi(&s, &p).unwrap(), jf);

    let vals = vec![(0, vec![1.5, -2.0]), (3, vec![0.25, 1e-17])];
    let p = dir.path().join("df.csv");
    write_bytes(&p, &differentials_csv(&s, &vals).unwrap()).unwrap();
    let back = read_differentials(&s, &p).unwrap();
    assert_eq!(back.into_iter().collect::<Vec<_>>(), vals);
}

#[test]
fn lattice_embedding_chart_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let mut lf = LatticeField::new();
    lf.insert(vec![0, -1], 0.5);
    lf.insert(vec![2, 3], -1.25);
    let p = dir.path().join("l.csv");
    write_bytes(&p, &lattice_csv(2, &lf).unwrap()).unwrap();
    assert_eq!(read_lattice(&p).unwrap(), (2, lf));

    let s = generate_space(&SpaceSpec::PathGraph { n: 4, edge: 1.0 }).unwrap();
    let z: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, 0.1 * i as f64]).collect();
    let p = dir.path().join("e.csv");
    write_bytes(&p, &embedding_csv(&s, &z).unwrap()).unwrap();
    assert_eq!(read_embedding(&s, &p).unwrap(), z);

    let fpath = dir.path().join("xi.csv");
    write_bytes(&fpath, &field_csv(&s, &[0.0, 2.0, 4.0, 6.0]).unwrap()).unwrap();
    let spec = ChartSpec {
        points: Some(vec![s.ids()[1].clone(), s.ids()[2].clone()]),
        coordinates: vec![CoordinateSource::Axis { axis: 0 }, CoordinateSource::Field { path: "xi.csv".into() }],
    };
    let cp = dir.path().join("chart.json");
    write_json(&cp, &spec).unwrap();
    let chart = read_chart(&s, &cp).unwrap();
    assert_eq!(chart.points, vec![1, 2]);
    assert_eq!(chart.xi(2), vec![2.0, 4.0]);
}
