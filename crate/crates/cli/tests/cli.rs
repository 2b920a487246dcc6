use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use morphspan_core::morphometrics::FEATURE_NAMES;
use morphspan_core::phantoms::{generate, PhantomKind, PhantomSpec};
use morphspan_core::volume::{write_mask, Geometry, Orientation, VoxelMask};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morphspan")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn read(path: &Path) -> Csv {
        let text = fs::read_to_string(path).unwrap();
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let split = |l: &str| l.split(',').map(str::to_owned).collect::<Vec<_>>();
        let header = split(lines.next().unwrap());
        Csv { header, rows: lines.map(split).collect() }
    }

    fn col(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
    }

    fn f(&self, row: usize, name: &str) -> f64 {
        self.rows[row][self.col(name)].parse().unwrap()
    }

    fn s(&self, row: usize, name: &str) -> &str {
        &self.rows[row][self.col(name)]
    }
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_owned()
}

const VERSION_LINE: &str = concat!("# morphspan ", env!("CARGO_PKG_VERSION"));

#[test]
fn help_and_version_exit_zero() {
    let out = ok(&["--help"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("pipeline"));
    let out = ok(&["--version"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let out = run(&["fdr", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["fdr", "--in", p(&dir.path().join("absent.csv")), "-o", p(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"connectivity": 7}"#).unwrap();
    let out = run(&["--config", p(&cfg), "fdr", "--in", p(&data("diabetes_term_pvalues.csv")), "-o", p(&dir.path().join("o.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    fs::write(&cfg, r#"{"no_such_field": 1}"#).unwrap();
    let out = run(&["--config", p(&cfg), "fdr", "--in", p(&data("diabetes_term_pvalues.csv")), "-o", p(&dir.path().join("o.csv"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn phantom_then_extract_recovers_sphere_volume() {
    let dir = tempfile::tempdir().unwrap();
    let mask = dir.path().join("s.nii.gz");
    ok(&["phantom", "--kind", "sphere", "--r", "30", "--spacing", "3", "-o", p(&mask)]);
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    let analytic = sidecar["analytic_features"]["volume_mm3"].as_f64().unwrap();
    assert!((analytic - 113_097.3).abs() < 0.1);

    let manifest = dir.path().join("manifest.csv");
    fs::write(&manifest, "scan_id,patient_id,path\nscan1,p1,s.nii.gz\n").unwrap();
    let features = dir.path().join("features.csv");
    ok(&["extract", "--manifest", p(&manifest), "-o", p(&features)]);
    assert_eq!(first_line(&features), VERSION_LINE);
    let t = Csv::read(&features);
    let mut expect = vec!["scan_id", "patient_id"];
    expect.extend(FEATURE_NAMES);
    expect.extend(["voxel_volume_mm3", "n_components", "touches_edge"]);
    assert_eq!(t.header, expect);
    let v = t.f(0, "volume_mm3");
    assert!((v - 113_097.3).abs() / 113_097.3 < 0.02, "volume {v}");
    assert_eq!(t.s(0, "n_components"), "1");
    assert_eq!(t.s(0, "touches_edge"), "false");
}

#[test]
fn phantom_without_its_size_flag_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["phantom", "--kind", "ellipsoid", "-o", p(&dir.path().join("e.nii"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("semi-axes"));
}

#[test]
fn extract_is_orientation_independent_and_flags_blobs() {
    let dir = tempfile::tempdir().unwrap();
    let las = generate(&PhantomSpec::ellipsoid([21.0, 12.0, 9.0], 3.0)).unwrap();
    write_mask(&las, dir.path().join("las.nii.gz")).unwrap();
    write_mask(&flip_axis0(&las), dir.path().join("ras.nii.gz")).unwrap();
    let blobs = generate(&PhantomSpec::new(PhantomKind::TwoBlobs { radius: 9.0, separation: 30.0 }, 3.0, 2)).unwrap();
    write_mask(&blobs, dir.path().join("blobs.nii")).unwrap();
    let manifest = dir.path().join("m.csv");
    fs::write(&manifest, "scan_id,patient_id,path\nb,p2,blobs.nii\na,p1,las.nii.gz\nc,p3,ras.nii.gz\n").unwrap();
    let out = dir.path().join("f.csv");
    ok(&["extract", "--manifest", p(&manifest), "-o", p(&out)]);
    let t = Csv::read(&out);
    // rows sorted by scan id
    let ids: Vec<&str> = (0..3).map(|r| t.s(r, "scan_id")).collect();
    assert_eq!(ids, ["a", "b", "c"]);
    for f in FEATURE_NAMES {
        assert!((t.f(0, f) - t.f(2, f)).abs() <= 1e-9 * t.f(0, f).abs().max(1.0), "{f}");
    }
    assert_eq!(t.s(1, "n_components"), "2");
}

/// Same physical voxels stored with the left-right axis reversed (RAS).
fn flip_axis0(m: &VoxelMask) -> VoxelMask {
    let g = m.geometry();
    let [n0, ..] = g.dims;
    let origin = g.world([(n0 - 1) as f64, 0.0, 0.0]);
    let flipped = Geometry::new(g.dims, g.spacing, Orientation::RAS, origin).unwrap();
    VoxelMask::from_fn(flipped, |i, j, k| m.get(n0 - 1 - i, j, k))
}

/// Independent step-up recomputation on the given raw values.
fn bh_reference(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    p.iter()
        .map(|&pi| {
            p.iter()
                .filter(|&&pj| pj >= pi)
                .map(|&pj| pj * m as f64 / p.iter().filter(|&&q| q <= pj).count() as f64)
                .fold(1.0, f64::min)
        })
        .collect()
}

#[test]
fn fdr_from_csv_matches_reference_recompute() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pvalues.csv");
    ok(&["fdr", "--in", p(&data("diabetes_term_pvalues.csv")), "-o", p(&out)]);
    assert_eq!(first_line(&out), VERSION_LINE);
    let t = Csv::read(&out);
    assert_eq!(t.header, ["feature", "coefficient", "se", "p_raw", "p_adjusted", "significant"]);
    let raw: Vec<f64> = (0..t.rows.len()).map(|r| t.f(r, "p_raw")).collect();
    for (r, q) in bh_reference(&raw).iter().enumerate() {
        assert!((t.f(r, "p_adjusted") - q).abs() <= 1e-15 * q);
        assert_eq!(t.s(r, "significant") == "true", *q < 0.05);
    }
}

#[test]
fn fdr_computes_wald_p_when_only_coefficients_are_given() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    fs::write(&input, "feature,coefficient,se\nvolume_mm3,-1.92,0.900\n").unwrap();
    let out = dir.path().join("o.csv");
    ok(&["fdr", "--in", p(&input), "-o", p(&out)]);
    let t = Csv::read(&out);
    assert!((t.f(0, "p_raw") - 0.0327).abs() <= 5e-4);

    fs::write(&input, "feature,estimate\nx,1\n").unwrap();
    let bad = run(&["fdr", "--in", p(&input), "-o", p(&out)]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("p_raw"));
}

fn plot(kind: &str, input: &Path, out: &Path) -> Output {
    run(&["plot", "--kind", kind, "--in", p(input), "-o", p(out)])
}

#[test]
fn plots_match_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, input, golden) in [
        ("centiles", "centiles_small.csv", "centiles_small.svg"),
        ("boxstats", "boxstats_small.csv", "boxstats_small.svg"),
        ("trend", "trend_small.csv", "trend_small.svg"),
    ] {
        let out = dir.path().join(golden);
        let o = plot(kind, &data(input), &out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let got = fs::read(&out).unwrap();
        if std::env::var_os("MORPHSPAN_BLESS").is_some() {
            fs::write(data(golden), &got).unwrap();
        }
        assert_eq!(got, fs::read(data(golden)).unwrap(), "{golden} differs; rerun with MORPHSPAN_BLESS=1 if intended");
        let text = String::from_utf8(got).unwrap();
        assert!(text.starts_with("<?xml") && text.trim_end().ends_with("</svg>"));
    }
}

#[test]
fn empty_series_give_no_data_panels() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, header) in [
        ("centiles", "feature,sex,diabetes,weight_kg,age_years,p5,p50,p95"),
        ("boxstats", "feature,sex,age_group,n,median,q1,q3,whisker_low,whisker_high,outliers"),
        ("trend", "group,age_years,fit,lower,upper"),
    ] {
        let input = dir.path().join(format!("{kind}.csv"));
        fs::write(&input, format!("{VERSION_LINE}\n{header}\n")).unwrap();
        let out = dir.path().join(format!("{kind}.svg"));
        assert!(plot(kind, &input, &out).status.success());
        let svg = fs::read_to_string(&out).unwrap();
        assert!(svg.contains("no data") && svg.contains("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}

#[test]
fn centile_plot_rejects_crossing_centiles_and_names_missing_columns() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.csv");
    fs::write(&input, "feature,sex,diabetes,weight_kg,age_years,p5,p50,p95\nv,M,0,80,30,10,30,20\n").unwrap();
    let out = plot("centiles", &input, &dir.path().join("c.svg"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not strictly increasing"));

    fs::write(&input, "feature,sex,weight_kg,age_years,p5,p50,p95\nv,M,80,30,10,20,30\n").unwrap();
    let out = plot("centiles", &input, &dir.path().join("c.svg"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`diabetes`"));

    let out = plot("trend", &data("boxstats_small.csv"), &dir.path().join("t.svg"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`group`"));
}

/// Foreground pixels of a MIP SVG as (x, y) coordinate strings.
fn mip_pixels(svg: &str) -> BTreeSet<(String, String)> {
    svg.lines()
        .filter(|l| l.starts_with(r#"<rect class="px""#))
        .map(|l| {
            let attr = |name: &str| {
                let start = l.find(&format!(" {name}=\"")).unwrap() + name.len() + 3;
                l[start..start + l[start..].find('"').unwrap()].to_owned()
            };
            (attr("x"), attr("y"))
        })
        .collect()
}

fn mip(mask: &Path, axis: &str, out: &Path) -> String {
    ok(&["mip", "--mask", p(mask), "--axis", axis, "-o", p(out)]);
    fs::read_to_string(out).unwrap()
}

#[test]
fn mip_of_sphere_is_a_disc_of_its_diameter() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("s.nii.gz");
    ok(&["phantom", "--kind", "sphere", "--r", "30", "--spacing", "3", "-o", p(&m)]);
    for axis in ["axial", "coronal", "sagittal"] {
        let svg = mip(&m, axis, &dir.path().join(format!("{axis}.svg")));
        let px = mip_pixels(&svg);
        let xs: BTreeSet<i64> = px.iter().map(|(x, _)| x.parse::<f64>().unwrap().round() as i64).collect();
        let ys: BTreeSet<i64> = px.iter().map(|(_, y)| y.parse::<f64>().unwrap().round() as i64).collect();
        // 2 px per mm, 3 mm voxels
        let width_vox = (xs.last().unwrap() - xs.first().unwrap()) / 6 + 1;
        let height_vox = (ys.last().unwrap() - ys.first().unwrap()) / 6 + 1;
        for extent in [width_vox, height_vox] {
            assert!((extent as f64 * 3.0 - 60.0).abs() <= 3.0, "{axis}: {extent} voxels");
        }
        let disc = std::f64::consts::PI * 100.0;
        assert!((px.len() as f64 - disc).abs() / disc < 0.1, "{axis}: {} pixels", px.len());
        assert!(svg.contains("1 dm"));
    }
}

#[test]
fn mip_distributes_over_union() {
    let dir = tempfile::tempdir().unwrap();
    let g = Geometry::new([30, 26, 22], [2.0, 1.5, 3.0], Orientation::LAS, [0.0; 3]).unwrap();
    let ball = |c: [f64; 3], r: f64| {
        move |i: usize, j: usize, k: usize| {
            let d = [(i as f64 - c[0]) * 2.0, (j as f64 - c[1]) * 1.5, (k as f64 - c[2]) * 3.0];
            d.iter().map(|v| v * v).sum::<f64>() <= r * r
        }
    };
    let a = VoxelMask::from_fn(g, ball([10.0, 10.0, 8.0], 12.0));
    let b = VoxelMask::from_fn(g, ball([16.0, 13.0, 12.0], 12.0));
    let u = VoxelMask::from_fn(g, |i, j, k| a.get(i, j, k) || b.get(i, j, k));
    for (name, m) in [("a", &a), ("b", &b), ("u", &u)] {
        write_mask(m, dir.path().join(format!("{name}.nii"))).unwrap();
    }
    for axis in ["axial", "coronal", "sagittal"] {
        let px = |n: &str| mip_pixels(&mip(&dir.path().join(format!("{n}.nii")), axis, &dir.path().join("o.svg")));
        let union: BTreeSet<_> = px("a").union(&px("b")).cloned().collect();
        assert_eq!(px("u"), union, "{axis}");
    }
}

#[test]
fn axial_mip_of_box_counts_footprint_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let g = Geometry::new([14, 11, 9], [1.5, 2.0, 3.0], Orientation::LAS, [0.0; 3]).unwrap();
    let m = VoxelMask::from_fn(g, |i, j, k| (3..11).contains(&i) && (2..7).contains(&j) && (1..5).contains(&k));
    let path = dir.path().join("box.nii.gz");
    write_mask(&flip_axis0(&m), &path).unwrap();
    let svg = mip(&path, "axial", &dir.path().join("a.svg"));
    // 12 mm by 10 mm footprint over 1.5 mm by 2 mm pixels
    assert_eq!(mip_pixels(&svg).len(), 40);
    assert!(svg.contains(r#"data-pixels="40""#));
    let svg = mip(&path, "sagittal", &dir.path().join("s.svg"));
    assert_eq!(mip_pixels(&svg).len(), 20);
}

#[test]
fn empty_mask_gives_blank_projection() {
    let dir = tempfile::tempdir().unwrap();
    let g = Geometry::new([5, 5, 5], [1.0; 3], Orientation::LAS, [0.0; 3]).unwrap();
    let path = dir.path().join("e.nii");
    write_mask(&VoxelMask::empty(g), &path).unwrap();
    let out = ok(&["mip", "--mask", p(&path), "--axis", "axial", "-o", p(&dir.path().join("e.svg"))]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
    assert!(mip_pixels(&fs::read_to_string(dir.path().join("e.svg")).unwrap()).is_empty());
}

fn save(dir: &Path, name: &str, m: &VoxelMask) -> String {
    write_mask(m, dir.join(name)).unwrap();
    name.to_owned()
}

#[test]
fn qc_flags_and_selection_on_phantoms() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut manifest = String::from("session_id,scan_id,age_years,pancreas,liver,spleen,kidney_left,kidney_right\n");
    for s in 0..6 {
        for (k, scan) in ["a", "b"].iter().enumerate() {
            let tag = format!("s{s}{scan}");
            let pancreas = match tag.as_str() {
                "s2b" => generate(&PhantomSpec::new(PhantomKind::TwoBlobs { radius: 8.0, separation: 24.0 }, 3.0, 2)),
                "s3b" => generate(&PhantomSpec::new(PhantomKind::EdgeTouchingSphere { radius: 12.0 }, 3.0, 2)),
                _ => generate(&PhantomSpec::sphere(11.0 + s as f64 + 2.0 * k as f64, 3.0)),
            }
            .unwrap();
            let edges = if tag == "s4a" {
                [150.0, 18.0, 60.0]
            } else {
                [60.0 + 3.0 * s as f64, 45.0 + 3.0 * k as f64, 51.0 - 3.0 * s as f64]
            };
            let liver = generate(&PhantomSpec::cuboid(edges, 3.0)).unwrap();
            let small = |r: f64| generate(&PhantomSpec::sphere(r, 3.0)).unwrap();
            let cols = [
                save(d, &format!("{tag}_pancreas.nii"), &pancreas),
                save(d, &format!("{tag}_liver.nii"), &liver),
                save(d, &format!("{tag}_spleen.nii"), &small(15.0 + k as f64)),
                save(d, &format!("{tag}_kl.nii"), &small(14.0 + s as f64 % 2.0)),
                save(d, &format!("{tag}_kr.nii"), &small(14.0 - k as f64)),
            ];
            manifest.push_str(&format!("s{s},{tag},{},{}\n", 30 + 8 * s, cols.join(",")));
        }
    }
    let m = d.join("organs.csv");
    fs::write(&m, manifest).unwrap();
    let (flags, vols) = (d.join("flags.csv"), d.join("organ_volumes.csv"));
    ok(&["qc-flags", "--manifest", p(&m), "-o", p(&flags), "--volumes", p(&vols)]);

    let v = Csv::read(&vols);
    assert_eq!(
        v.header,
        ["session_id", "scan_id", "age_years", "pancreas_mm3", "liver_mm3", "spleen_mm3", "kidney_left_mm3", "kidney_right_mm3"]
    );
    assert_eq!(v.rows.len(), 12);
    let f = Csv::read(&flags);
    let f = &f;
    let flagged: Vec<(String, &str)> = (0..f.rows.len())
        .flat_map(|r| {
            ["multi_component", "touches_edge", "bbox_outlier"]
                .into_iter()
                .filter(move |c| f.s(r, c) == "true")
                .map(move |c| (f.s(r, "scan_id").to_owned(), c))
        })
        .collect();
    assert_eq!(
        flagged,
        [("s2b".to_string(), "multi_component"), ("s3b".into(), "touches_edge"), ("s4a".into(), "bbox_outlier")]
    );

    let sel = d.join("selected.csv");
    ok(&["qc-select", "--volumes", p(&vols), "--flags", p(&flags), "--degree", "1", "-o", p(&sel)]);
    let t = Csv::read(&sel);
    assert_eq!(t.rows.len(), 6);
    let chosen: BTreeSet<&str> = (0..6).map(|r| t.s(r, "scan_id")).collect();
    for s in ["s2a", "s3a", "s4b"] {
        assert!(chosen.contains(s), "{s} should survive as the only clean scan");
    }
}

const PATIENTS: &str = "patient_id,age_years,sex,weight_kg,modality,scan_date,a1c
c1,45,F,70,ct_contrast,2015-06-01,5.2
c2,61,M,88,ct_noncontrast,2016-01-10,
t1,47,F,75,ct_contrast,2015-03-01,7.9
t2,60,M,90,mri,2017-09-09,
x1,52,M,80,ct_contrast,2014-02-02,6.8
x2,33,F,60,ct_contrast,2013-05-05,
x3,70,M,77,ct_contrast,2012-12-12,
x4,49,F,66,ct_contrast,2018-08-08,
";

const EVENTS: &str = "patient_id,date,vocabulary,code,description
t1,2015-09-01,ICD,E11.9,type 2 diabetes mellitus
t2,2014-01-01,PHECODE,250.00,diabetes type ii
c2,2017-06-01,ICD,E11.9,type 2 diabetes mellitus
x2,2013-05-20,ICD,S36.1,injury of liver
x3,2012-01-01,ICD,K86.1,chronic pancreatitis
x4,2018-01-01,ICD,E11.9,type 2 diabetes mellitus
x4,2018-02-01,ICD,E10.9,type 1 diabetes mellitus
";

fn write_cohort_inputs(d: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let (pat, ev, codes) = (d.join("patients.csv"), d.join("events.csv"), d.join("codes.json"));
    fs::write(&pat, PATIENTS).unwrap();
    fs::write(&ev, EVENTS).unwrap();
    fs::write(
        &codes,
        r#"{"t2d":["E11*","250.00"],"t1d":["E10*"],"cancer":["C25*"],"sepsis":["A41*"],"trauma":["S36*"]}"#,
    )
    .unwrap();
    (pat, ev, codes)
}

#[test]
fn label_and_match_follow_the_rules() {
    let dir = tempfile::tempdir().unwrap();
    let (pat, ev, codes) = write_cohort_inputs(dir.path());
    let cohort = dir.path().join("cohort.csv");
    ok(&["label", "--patients", p(&pat), "--events", p(&ev), "--codes", p(&codes), "-o", p(&cohort)]);
    let t = Csv::read(&cohort);
    let got: Vec<(&str, &str, &str)> =
        (0..t.rows.len()).map(|r| (t.s(r, "patient_id"), t.s(r, "group"), t.s(r, "exclusion_reason"))).collect();
    assert_eq!(
        got,
        [
            ("c1", "control", ""),
            // t2d code more than a year after the scan
            ("c2", "control", ""),
            ("t1", "t2d", ""),
            ("t2", "t2d", ""),
            ("x1", "excluded", "a1c_contradicts_control"),
            ("x2", "excluded", "trauma"),
            ("x3", "excluded", "pancreas_pathology"),
            ("x4", "excluded", "t1d_or_ambiguous"),
        ]
    );

    let matched = dir.path().join("matched.csv");
    ok(&["match", "--cohort", p(&cohort), "-o", p(&matched)]);
    let m = Csv::read(&matched);
    let ids: Vec<&str> = (0..m.rows.len()).map(|r| m.s(r, "patient_id")).collect();
    assert_eq!(ids, ["c1", "c2", "t1", "t2"]);

    // the config supplies the code lists and a wider trauma window; the flag wins
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"codes": "codes.json", "a1c_threshold": 7.0}"#).unwrap();
    let relabel = dir.path().join("relabel.csv");
    ok(&["--config", p(&cfg), "label", "--patients", p(&pat), "--events", p(&ev), "--a1c-threshold", "6.5", "-o", p(&relabel)]);
    assert_eq!(fs::read(&relabel).unwrap(), fs::read(&cohort).unwrap());
    ok(&["--config", p(&cfg), "label", "--patients", p(&pat), "--events", p(&ev), "-o", p(&relabel)]);
    let r = Csv::read(&relabel);
    assert_eq!(r.s(4, "group"), "control");
}

#[test]
fn boxstats_totals_match_cohort_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["demo", "--out-dir", p(d), "--patients", "60", "--seed", "3"]);
    let features = d.join("features.csv");
    ok(&["extract", "--manifest", p(&d.join("manifest.csv")), "-o", p(&features)]);
    let cohort = d.join("cohort.csv");
    ok(&["--config", p(&d.join("config.json")), "label", "--patients", p(&d.join("patients.csv")), "--events", p(&d.join("events.csv")), "-o", p(&cohort)]);
    let out = d.join("box.csv");
    ok(&["boxstats", "--features", p(&features), "--cohort", p(&cohort), "--feature", "flatness", "-o", p(&out)]);
    let c = Csv::read(&cohort);
    let kept = (0..c.rows.len()).filter(|&r| c.s(r, "group") != "excluded").count();
    let b = Csv::read(&out);
    let total: usize = (0..b.rows.len()).map(|r| b.s(r, "n").parse::<usize>().unwrap()).sum();
    assert_eq!(total, kept);
    assert!((0..b.rows.len()).all(|r| b.s(r, "feature") == "flatness"));

    let trend = d.join("trend.csv");
    ok(&["fit-poly", "--features", p(&features), "--cohort", p(&cohort), "-o", p(&trend)]);
    let t = Csv::read(&trend);
    assert!(!t.rows.is_empty());
    for r in 0..t.rows.len() {
        assert!(t.f(r, "lower") <= t.f(r, "fit") && t.f(r, "fit") <= t.f(r, "upper"));
    }
    let bad = run(&["boxstats", "--features", p(&features), "--cohort", p(&cohort), "--feature", "girth", "-o", p(&out)]);
    assert_eq!(bad.status.code(), Some(1));
}

fn read_all(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn pipeline_equals_the_individual_steps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let demo = d.join("demo");
    ok(&["demo", "--out-dir", p(&demo)]);
    let (manifest, patients, events, codes) =
        (demo.join("manifest.csv"), demo.join("patients.csv"), demo.join("events.csv"), demo.join("codes.json"));
    let auto = d.join("auto");
    ok(&["pipeline", "--manifest", p(&manifest), "--out-dir", p(&auto)]);

    let m = d.join("manual");
    let f = |n: &str| m.join(n);
    ok(&["extract", "--manifest", p(&manifest), "-o", p(&f("features.csv"))]);
    ok(&["label", "--patients", p(&patients), "--events", p(&events), "--codes", p(&codes), "-o", p(&f("cohort.csv"))]);
    ok(&["match", "--cohort", p(&f("cohort.csv")), "-o", p(&f("cohort_matched.csv"))]);
    ok(&[
        "fit-gamlss",
        "--cohort",
        p(&f("cohort_matched.csv")),
        "--features",
        p(&f("features.csv")),
        "--out-dir",
        p(&f("fits")),
        "--centiles",
        p(&f("centiles.csv")),
    ]);
    let fits: Vec<String> = FEATURE_NAMES.iter().map(|n| p(&f(&format!("fits/{n}.fit.json"))).to_owned()).collect();
    let mut args = vec!["fdr", "-o"];
    let pv = f("pvalues.csv");
    args.push(p(&pv));
    args.push("--fits");
    args.extend(fits.iter().map(String::as_str));
    ok(&args);
    ok(&["boxstats", "--features", p(&f("features.csv")), "--cohort", p(&f("cohort.csv")), "-o", p(&f("boxstats.csv"))]);
    ok(&["fit-poly", "--features", p(&f("features.csv")), "--cohort", p(&f("cohort.csv")), "-o", p(&f("trend.csv"))]);
    for (kind, input) in [("centiles", "centiles"), ("boxstats", "boxstats"), ("trend", "trend")] {
        ok(&["plot", "--kind", kind, "--in", p(&f(&format!("{input}.csv"))), "-o", p(&f(&format!("{input}.svg")))]);
    }

    let (a, b) = (read_all(&auto), read_all(&m));
    let names = |v: &[(PathBuf, Vec<u8>)]| v.iter().map(|x| x.0.clone()).collect::<Vec<_>>();
    assert_eq!(names(&a), names(&b));
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        assert!(x == y, "{} differs", name.display());
        if name.extension().is_some_and(|e| e == "csv") {
            assert_eq!(String::from_utf8_lossy(x).lines().next(), Some(VERSION_LINE), "{}", name.display());
        }
    }
    assert_eq!(a.iter().filter(|x| x.0.starts_with("fits")).count(), 13);

    // saved fits reproduce centiles through the standalone command
    let c = Csv::read(&f("centiles.csv"));
    let row = (0..c.rows.len()).find(|&r| c.s(r, "feature") == "volume_mm3" && c.s(r, "sex") == "F").unwrap();
    let weight = c.s(row, "weight_kg").to_owned();
    let diabetes = c.s(row, "diabetes").to_owned();
    let age = c.s(row, "age_years").to_owned();
    let one = d.join("one.csv");
    ok(&["centiles", "--fit", &fits[0], "--sex", "F", "--diabetes", &diabetes[..1], "--weight", &weight, "--ages", &age, "-o", p(&one)]);
    let o = Csv::read(&one);
    for l in ["p5", "p50", "p95"] {
        assert_eq!(o.s(0, l), c.s(row, l));
    }
    let out = run(&["centiles", "--fit", &fits[0], "--sex", "F", "--diabetes", "0", "--weight", "70", "--ages", "500", "-o", p(&one)]);
    assert_eq!(out.status.code(), Some(1));
}
