use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Value};

use lipcalc::experiments::{self, RunConfig, RunManifest};
use lipcalc::io;
use lipcalc_core::derivations::{
    build_stencil, default_rank_tol, jacobi_matrix, orthogonalize, pushforward_derivation, rank_bound_experiment, Scheme,
};
use lipcalc_core::differentiability::{estimate_differential_field, lipderiv_check, residual_profile};
use lipcalc_core::embedding::{assouad_embed, distortion_audit};
use lipcalc_core::hajlasz::{hajlasz_gradient, Exponent, SolverOptions};
use lipcalc_core::kuhn::{pl_extend, KuhnTriangulation};
use lipcalc_core::lipschitz::{geometric_scales, global_lip, liplip_ratio, mcshane_extend, pointwise_lip_profile};
use lipcalc_core::nets::{build_net, NetStrategy};
use lipcalc_core::space::generate_space;
use lipcalc_core::{Error, FiniteMetricMeasureSpace, ScalarField, SpaceSpec};

use super::{Command, DerivCmd, DiffCmd, ExpCmd, Globals, LipCmd, SpaceArgs, SpaceCmd, StrategyArg};

fn load(args: &SpaceArgs) -> Result<FiniteMetricMeasureSpace> {
    Ok(io::read_space(&args.space, args.weights.as_deref())?.0)
}

fn out(g: &Globals, name: &str) -> PathBuf {
    g.out_dir.join(name)
}

/// Writes a line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn say(line: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{line}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn emit(summary: Value) -> Result<i32> {
    say(&serde_json::to_string_pretty(&summary)?)?;
    Ok(0)
}

fn point(space: &FiniteMetricMeasureSpace, id: &str) -> Result<usize> {
    space.index_of(id).ok_or_else(|| anyhow!("unknown point id `{id}`"))
}

/// Inline JSON or a path to a JSON file.
fn json_arg<T: serde::de::DeserializeOwned>(arg: &str) -> Result<T> {
    let p = Path::new(arg);
    if !arg.trim_start().starts_with('{') && p.is_file() {
        return io::read_json(p);
    }
    serde_json::from_str(arg).with_context(|| format!("invalid JSON `{arg}`"))
}

pub fn dispatch(cmd: Command, g: &Globals) -> Result<i32> {
    match cmd {
        Command::Space(c) => space(c, g),
        Command::Net { space, eps, strategy } => {
            let s = load(&space)?;
            let strategy = match strategy {
                StrategyArg::Greedy => NetStrategy::GreedyScan,
                StrategyArg::Farthest => NetStrategy::FarthestPoint,
            };
            let net = build_net(&s, eps, strategy, g.seed)?;
            let ids: Vec<Vec<String>> = net.points.iter().map(|&p| vec![s.ids()[p].clone()]).collect();
            io::write_bytes(&out(g, "net.csv"), &io::csv_bytes(&["point_id".to_string()], ids)?)?;
            emit(json!({
                "points": net.points.len(),
                "epsilon": net.epsilon,
                "separation": net.separation,
                "covering_radius": net.covering_radius,
                "constant": net.constant,
            }))
        }
        Command::Mcshane { space, subset } => {
            let s = load(&space)?;
            let sub = io::read_partial_field(&s, &subset)?;
            let ext = mcshane_extend(&s, &sub)?;
            io::write_bytes(&out(g, "mcshane.csv"), &io::field_csv(&s, ext.values())?)?;
            emit(json!({ "subset": sub.len(), "lip": global_lip(&s, &ext)? }))
        }
        Command::Lip(c) => lip(c, g),
        Command::Hajlasz { space, field, p, max_iters } => {
            let s = load(&space)?;
            let u = io::read_field(&s, &field)?;
            let exponent = if p.eq_ignore_ascii_case("inf") {
                Exponent::Infinity
            } else {
                Exponent::Finite(p.parse().with_context(|| format!("invalid exponent `{p}`"))?)
            };
            let opts = SolverOptions { tol: g.tol.unwrap_or(SolverOptions::default().tol), max_iters };
            match hajlasz_gradient(&s, &u, exponent, opts) {
                Ok(h) => {
                    io::write_bytes(&out(g, "hajlasz.csv"), &io::field_csv(&s, &h.g)?)?;
                    emit(json!({ "norm": h.norm, "iterations": h.iterations, "gap": h.gap, "converged": true }))
                }
                Err(Error::NotConverged { iterations, gap, best }) => {
                    io::write_bytes(&out(g, "hajlasz.csv"), &io::field_csv(&s, &best)?)?;
                    say(&json!({ "iterations": iterations, "gap": gap, "converged": false }).to_string())?;
                    eprintln!("solver did not reach the tolerance; best feasible iterate written");
                    Ok(1)
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Deriv(c) => deriv(c, g),
        Command::Diff(c) => diff(c, g),
        Command::Pl { dim, level, lattice, queries } => {
            let (d, field) = io::read_lattice(&lattice)?;
            if d != dim {
                bail!("lattice CSV has dimension {d}, --dim is {dim}");
            }
            let mut r = csv::Reader::from_path(&queries).with_context(|| format!("cannot open {}", queries.display()))?;
            let qs = r
                .records()
                .map(|rec| rec?.iter().map(|v| v.trim().parse::<f64>().map_err(|_| anyhow!("bad query coordinate `{v}`"))).collect())
                .collect::<Result<Vec<Vec<f64>>>>()?;
            let tri = KuhnTriangulation::new(dim, level)?;
            let ext = pl_extend(&tri, &field, &qs)?;
            let mut head: Vec<String> = (0..dim).map(|i| format!("q{i}")).collect();
            head.push("value".into());
            head.extend((0..dim).map(|i| format!("grad{i}")));
            let rows = qs.iter().enumerate().map(|(k, q)| {
                q.iter().map(|v| v.to_string()).chain([ext.values[k].to_string()]).chain(ext.gradients[k].iter().map(|v| v.to_string())).collect()
            });
            io::write_bytes(&out(g, "pl.csv"), &io::csv_bytes(&head, rows)?)?;
            emit(json!({ "lip_extension": ext.lip_extension, "lip_vertices": ext.lip_vertices, "ratio": ext.ratio }))
        }
        Command::Embed { space, s, scales } => {
            let sp = load(&space)?;
            let e = assouad_embed(&sp, s, scales, g.seed)?;
            io::write_bytes(&out(g, "embedding.csv"), &io::embedding_csv(&sp, &e.images)?)?;
            let report = audit_json(&sp, &e.audit, Some(&e));
            io::write_json(&out(g, "audit.json"), &report)?;
            emit(report)
        }
        Command::Audit { space, embedding, s } => {
            let sp = load(&space)?;
            let z = io::read_embedding(&sp, &embedding)?;
            let a = distortion_audit(&sp, &z, s, g.seed)?;
            let report = audit_json(&sp, &a, None);
            io::write_json(&out(g, "audit.json"), &report)?;
            emit(report)
        }
        Command::Exp(c) => exp(c, g),
    }
}

fn audit_json(
    sp: &FiniteMetricMeasureSpace,
    a: &lipcalc_core::embedding::DistortionAudit,
    e: Option<&lipcalc_core::embedding::EmbeddingResult>,
) -> Value {
    let ids = sp.ids();
    let mut v = json!({
        "k_low": a.k_low,
        "k_up": a.k_up,
        "ratio": a.ratio(),
        "worst_low_pair": [ids[a.argmin.0], ids[a.argmin.1]],
        "worst_up_pair": [ids[a.argmax.0], ids[a.argmax.1]],
        "pairs": a.pairs,
        "sampled": a.sampled,
    });
    if let Some(e) = e {
        v["dim"] = json!(e.dim);
        v["s"] = json!(e.s);
        v["scales"] = json!(e.scales.len());
        v["colors"] = json!(e.colors);
        v["block"] = json!(e.block);
        v["certified_low"] = json!(e.certified_low);
        v["certified_up"] = json!(e.certified_up);
        v["covers_all_pairs"] = json!(e.covers_all_pairs);
    }
    v
}

fn space(c: SpaceCmd, g: &Globals) -> Result<i32> {
    let (s, spec) = match &c {
        SpaceCmd::Gen { spec } => {
            let spec: SpaceSpec = io::read_json(spec)?;
            (generate_space(&spec)?, Some(spec))
        }
        SpaceCmd::Import { matrix, weights } => io::read_space(matrix, weights.as_deref())?,
    };
    io::write_bytes(&out(g, "space_distances.csv"), &io::distance_matrix_csv(&s)?)?;
    io::write_bytes(&out(g, "space_weights.csv"), &io::weights_csv(&s)?)?;
    if let Some(spec) = &spec {
        io::write_json(&out(g, "space_spec.json"), spec)?;
    }
    let audit = s.triangle_audit(g.seed);
    emit(json!({
        "points": s.len(),
        "total_mass": s.total_mass(),
        "diameter": s.diameter(),
        "min_distance": s.min_distance(),
        "triangle_inequality": audit.passed(),
        "warnings": s.warnings().iter().map(|w| format!("{w:?}")).collect::<Vec<_>>(),
    }))
}

fn lip(c: LipCmd, g: &Globals) -> Result<i32> {
    match c {
        LipCmd::Profile { space, field, point: id, scales } => {
            let s = load(&space)?;
            let f = io::read_field(&s, &field)?;
            let p = pointwise_lip_profile(&s, &f, point(&s, &id)?, &geometric_scales(scales.r0, scales.count))?;
            let report = json!({
                "point": id,
                "scales": p.scales,
                "slopes": p.slopes,
                "upper": p.upper,
                "lower": p.lower,
                "dropped": p.dropped,
            });
            io::write_json(&out(g, "lip_profile.json"), &report)?;
            emit(report)
        }
        LipCmd::Ratio { space, field, scales } => {
            let s = load(&space)?;
            let f = io::read_field(&s, &field)?;
            let sc = geometric_scales(scales.r0, scales.count);
            let mut rows = Vec::new();
            let mut unresolved = 0;
            for x in 0..s.len() {
                let r = match liplip_ratio(&s, &f, x, &sc) {
                    Ok(v) => v,
                    Err(Error::NoUsableScales) => {
                        unresolved += 1;
                        f64::NAN
                    }
                    Err(e) => return Err(e.into()),
                };
                rows.push(vec![s.ids()[x].clone(), r.to_string()]);
            }
            io::write_bytes(&out(g, "liplip.csv"), &io::csv_bytes(&["point_id".into(), "ratio".into()], rows)?)?;
            emit(json!({ "points": s.len(), "unresolved": unresolved }))
        }
    }
}

fn deriv(c: DerivCmd, g: &Globals) -> Result<i32> {
    match c {
        DerivCmd::Build { space, scheme, h } => {
            let s = load(&space)?;
            let scheme: Scheme = json_arg(&scheme)?;
            let d = build_stencil(&s, &scheme, h)?;
            io::write_bytes(&out(g, "stencil.csv"), &io::stencil_csv(&s, &d)?)?;
            let empty = d.stencils.iter().filter(|st| st.is_empty()).count();
            emit(json!({ "points": s.len(), "radius": h, "empty_stencils": empty }))
        }
        DerivCmd::Jacobi { space, stencils, h, generators } => {
            let s = load(&space)?;
            let ds = stencils.iter().map(|p| io::read_stencil(&s, p, h)).collect::<Result<Vec<_>>>()?;
            let gs = generators.iter().map(|p| io::read_field(&s, p)).collect::<Result<Vec<_>>>()?;
            let jf = jacobi_matrix(&ds, &gs)?;
            io::write_bytes(&out(g, "jacobi.csv"), &io::jacobi_csv(&s, &jf)?)?;
            emit(json!({ "m": jf.m, "n": jf.n, "points": jf.len() }))
        }
        DerivCmd::Orthogonalize { space, jacobi } => {
            let s = load(&space)?;
            let jf = io::read_jacobi(&s, &jacobi)?;
            let tol = g.tol.unwrap_or(1e-10);
            let r = orthogonalize(&jf, tol)?;
            let ids = s.ids();
            let mut coeffs = Vec::new();
            let mut ortho = Vec::new();
            for (x, p) in r.points.iter().enumerate() {
                let Some(p) = p else { continue };
                for i in 0..p.coefficients.rows() {
                    for j in 0..p.coefficients.cols() {
                        coeffs.push(vec![ids[x].clone(), i.to_string(), j.to_string(), p.coefficients[(i, j)].to_string()]);
                    }
                    for j in 0..p.jacobi.cols() {
                        ortho.push(vec![ids[x].clone(), i.to_string(), j.to_string(), p.jacobi[(i, j)].to_string()]);
                    }
                }
            }
            let head: Vec<String> = ["point", "i", "j", "value"].iter().map(|s| s.to_string()).collect();
            io::write_bytes(&out(g, "coefficients.csv"), &io::csv_bytes(&head, coeffs)?)?;
            io::write_bytes(&out(g, "orthogonal_jacobi.csv"), &io::csv_bytes(&head, ortho)?)?;
            let blocks: Vec<Value> = r
                .blocks
                .iter()
                .map(|(subset, pts)| json!({ "generators": subset, "points": pts.iter().map(|&x| ids[x].clone()).collect::<Vec<_>>() }))
                .collect();
            let report = json!({
                "tol": tol,
                "blocks": blocks,
                "degenerate": r.degenerate.iter().map(|&x| ids[x].clone()).collect::<Vec<_>>(),
            });
            io::write_json(&out(g, "blocks.json"), &report)?;
            emit(json!({ "blocks": r.blocks.len(), "degenerate": r.degenerate.len() }))
        }
        DerivCmd::Pushforward { space, stencil, h, map, pi } => {
            let s = load(&space)?;
            let d = io::read_stencil(&s, &stencil, h)?;
            let mut xi = vec![usize::MAX; s.len()];
            let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&map).with_context(|| format!("cannot open {}", map.display()))?;
            for rec in r.records() {
                let rec = rec?;
                xi[point(&s, &rec[0])?] = rec[1].parse().with_context(|| format!("bad target `{}`", &rec[1]))?;
            }
            if let Some(x) = xi.iter().position(|&t| t == usize::MAX) {
                bail!("map has no target for point `{}`", s.ids()[x]);
            }
            let target_len = xi.iter().max().unwrap() + 1;
            let mut piv = vec![0.0; target_len];
            let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&pi).with_context(|| format!("cannot open {}", pi.display()))?;
            for rec in r.records() {
                let rec = rec?;
                let t: usize = rec[0].parse().context("target index")?;
                if t >= target_len {
                    bail!("target {t} outside the image of the map");
                }
                piv[t] = rec[1].parse().context("target value")?;
            }
            let v = pushforward_derivation(&s, &xi, target_len, &d, &piv)?;
            let rows = v.iter().enumerate().map(|(t, x)| vec![t.to_string(), x.to_string()]);
            io::write_bytes(&out(g, "pushforward.csv"), &io::csv_bytes(&["target".into(), "value".into()], rows)?)?;
            emit(json!({ "targets": target_len }))
        }
        DerivCmd::Rank { space, radii, budget, generators, embedding_dim } => {
            let s = load(&space)?;
            let gens = if generators.is_empty() {
                let dim = s.ambient_dim().ok_or_else(|| anyhow!("space has no coordinates; pass --generator"))?;
                let mut v = (0..dim).map(|i| ScalarField::coordinate(&s, i)).collect::<lipcalc_core::Result<Vec<_>>>()?;
                v.push(ScalarField::from_coords(&s, |c| c.iter().map(|t| t * t).sum())?);
                v
            } else {
                generators.iter().map(|p| io::read_field(&s, p)).collect::<Result<Vec<_>>>()?
            };
            let rows = rank_bound_experiment(&s, &radii, &gens, budget, g.tol, embedding_dim)?;
            let table = rows.iter().map(|r| {
                vec![
                    r.radius.to_string(),
                    r.tol.to_string(),
                    r.essential_rank.to_string(),
                    r.tail_ratio.to_string(),
                    r.rank_mass.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(";"),
                ]
            });
            let head: Vec<String> = ["radius", "tol", "essential_rank", "tail_ratio", "rank_mass"].iter().map(|s| s.to_string()).collect();
            io::write_bytes(&out(g, "rank.csv"), &io::csv_bytes(&head, table)?)?;
            emit(json!({
                "essential_ranks": rows.iter().map(|r| r.essential_rank).collect::<Vec<_>>(),
                "default_tol": radii.iter().map(|&h| default_rank_tol(h, s.diameter())).collect::<Vec<_>>(),
            }))
        }
    }
}

fn diff(c: DiffCmd, g: &Globals) -> Result<i32> {
    match c {
        DiffCmd::Estimate { space, field, chart, r } => {
            let s = load(&space)?;
            let f = io::read_field(&s, &field)?;
            let ch = io::read_chart(&s, &chart)?;
            let df = estimate_differential_field(&s, &f, &ch, r)?;
            io::write_bytes(&out(g, "differentials.csv"), &io::differentials_csv(&s, &df.values)?)?;
            let degenerate: Vec<Value> = df.degenerate.iter().map(|(x, d)| json!({ "point": s.ids()[*x], "direction": d })).collect();
            emit(json!({ "estimated": df.values.len(), "degenerate": degenerate }))
        }
        DiffCmd::Residual { space, field, chart, differentials, point: id, scales } => {
            let s = load(&space)?;
            let f = io::read_field(&s, &field)?;
            let ch = io::read_chart(&s, &chart)?;
            let x = point(&s, &id)?;
            let dfs = io::read_differentials(&s, &differentials)?;
            let df = dfs.get(&x).ok_or_else(|| anyhow!("no differential recorded for `{id}`"))?;
            let p = residual_profile(&s, &f, &ch, df, x, &geometric_scales(scales.r0, scales.count))?;
            let report = json!({ "point": id, "scales": p.scales, "residuals": p.residuals, "differentiable": p.differentiable });
            io::write_json(&out(g, "residual.json"), &report)?;
            emit(report)
        }
        DiffCmd::Check { space, family, h, scales, budget } => {
            let s = load(&space)?;
            let dim = s.ambient_dim().ok_or_else(|| anyhow!("coordinate stencils need a space with coordinates"))?;
            let basis = (0..dim).map(|axis| build_stencil(&s, &Scheme::CoordinateAxis { axis }, h)).collect::<lipcalc_core::Result<Vec<_>>>()?;
            let fam = family.iter().map(|p| io::read_field(&s, p)).collect::<Result<Vec<_>>>()?;
            let r = lipderiv_check(&s, &fam, &basis, &geometric_scales(scales.r0, scales.count), budget)?;
            let report = json!({
                "budget": r.budget,
                "fraction_within": r.fraction_within,
                "k_hat": r.k_hat.iter().map(|v| if v.is_finite() { json!(v) } else { json!(v.to_string()) }).collect::<Vec<_>>(),
                "unresolved": r.unresolved.iter().map(|&x| s.ids()[x].clone()).collect::<Vec<_>>(),
            });
            io::write_json(&out(g, "lipderiv.json"), &report)?;
            emit(json!({ "fraction_within": r.fraction_within, "unresolved": r.unresolved.len() }))
        }
    }
}

fn parse_overrides(sets: &[String]) -> Result<Value> {
    let mut obj = serde_json::Map::new();
    for s in sets {
        let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("override `{s}` is not key=value"))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        obj.insert(k.trim().to_string(), value);
    }
    Ok(Value::Object(obj))
}

fn report(m: &RunManifest) {
    for c in &m.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        eprintln!("{} {tag} {}: {}", m.experiment, c.name, c.detail);
    }
}

fn exp(c: ExpCmd, g: &Globals) -> Result<i32> {
    match c {
        ExpCmd::List => {
            for e in experiments::registry() {
                say(&format!("{}  {}", e.id, e.title))?;
            }
            Ok(0)
        }
        ExpCmd::Replay { manifest } => {
            let r = experiments::replay(&manifest)?;
            say(&serde_json::to_string_pretty(&r)?)?;
            Ok(if r.identical { 0 } else { 1 })
        }
        ExpCmd::Run { id, set, space, parallel } => {
            let ids: Vec<&'static str> = if id.eq_ignore_ascii_case("all") {
                experiments::registry().iter().map(|e| e.id).collect()
            } else {
                vec![experiments::find(&id)?.id]
            };
            let cli_overrides = parse_overrides(&set)?;
            let space: Option<SpaceSpec> = space.map(|p| io::read_json(&p)).transpose()?;
            let configs: Vec<(&str, RunConfig)> = ids
                .iter()
                .map(|&e| {
                    let mut overrides = g.experiments.get(e).cloned().unwrap_or(json!({}));
                    if let (Value::Object(o), Value::Object(c)) = (&mut overrides, &cli_overrides) {
                        o.extend(c.clone());
                    }
                    (e, RunConfig { space: space.clone(), overrides, seed: g.seed })
                })
                .collect();
            let run_one = |(e, cfg): &(&str, RunConfig)| experiments::run(e, cfg, &g.out_dir.join(e));
            let results: Vec<Result<RunManifest>> = if parallel && configs.len() > 1 {
                let mut all = Vec::new();
                for chunk in configs.chunks(g.threads) {
                    let part: Vec<Result<RunManifest>> = std::thread::scope(|sc| {
                        let handles: Vec<_> = chunk.iter().map(|c| sc.spawn(move || run_one(c))).collect();
                        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(anyhow!("experiment thread panicked")))).collect()
                    });
                    all.extend(part);
                }
                all
            } else {
                configs.iter().map(run_one).collect()
            };
            let mut code = 0;
            for r in results {
                let m = r?;
                report(&m);
                say(&format!(
                    "{} {} ({:.2} s) -> {}",
                    m.experiment,
                    if m.passed { "passed" } else { "FAILED" },
                    m.wall_clock_secs,
                    g.out_dir.join(&m.experiment).display()
                ))?;
                if !m.passed {
                    code = 1;
                }
            }
            Ok(code)
        }
    }
}
