//! Text artifacts: meshes, trained models, training datasets, and the
//! shared approximation basis. Every float is written with Rust's
//! shortest-round-trip exponent formatting, so a save/load cycle is
//! bit-exact. All formats start with a `navem-<kind> v1` header line and
//! fail loudly on anything else.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::encoding::PolygonClass;
use crate::geometry::{Point2, Polygon};
use crate::geometry::mesh::Mesh;
use crate::harmonic::phi::PhiFunction;
use crate::harmonic::OrthonormalHarmonicBasis;
use crate::network::{Mlp, PredictorPair};
use crate::solver::SolverContext;
use crate::training::{sample_on_frame_element, Dataset, TrainingSample};
use crate::{Error, Result};

/// FNV-1a over raw bytes. Used to stamp datasets into model metadata so a
/// model remembers what it was trained on.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn hash_file(path: &Path) -> Result<u64> {
    Ok(fnv1a64(&std::fs::read(path)?))
}

/// Losses, seed, and dataset stamp carried inside a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMetadata {
    pub seed: u64,
    pub dataset_hash: u64,
    pub phi_loss: f64,
    pub q_loss: f64,
}

fn fmt_f64(x: f64) -> String {
    // {:e} keeps the shortest digit string that parses back to the same
    // bits; non-finite values have no place in any artifact.
    assert!(x.is_finite(), "refusing to serialize a non-finite float");
    format!("{x:e}")
}

fn push_floats<'a>(out: &mut String, xs: impl IntoIterator<Item = &'a f64>) {
    let mut first = true;
    for x in xs {
        if !first {
            out.push(' ');
        }
        let _ = write!(out, "{}", fmt_f64(*x));
        first = false;
    }
    out.push('\n');
}

struct Cursor<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor {
            lines: text.lines(),
            line_no: 0,
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.lines
            .next()
            .ok_or_else(|| Error::Format(format!("unexpected end of file at line {}", self.line_no)))
    }

    fn bad(&self, what: &str, line: &str) -> Error {
        Error::Format(format!("line {}: expected {what}, got {line:?}", self.line_no))
    }

    /// Next line must start with `tag`; returns the remaining tokens.
    fn tagged(&mut self, tag: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some(t) if t == tag => Ok(tokens.collect()),
            _ => Err(self.bad(tag, line)),
        }
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| self.bad("a float row", line))?;
        if vals.len() != n {
            return Err(self.bad(&format!("{n} floats"), line));
        }
        Ok(vals)
    }
}

fn parse_usize(c: &Cursor, token: Option<&&str>, what: &str) -> Result<usize> {
    token
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Format(format!("line {}: expected {what}", c.line_no)))
}

fn parse_f64(c: &Cursor, token: Option<&&str>, what: &str) -> Result<f64> {
    token
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Format(format!("line {}: expected {what}", c.line_no)))
}

fn parse_class(tag: &str) -> Result<PolygonClass> {
    let class = match tag {
        "T" => PolygonClass::PlainTriangle,
        _ if tag.starts_with('H') => {
            let c: u8 = tag[1..]
                .parse()
                .map_err(|_| Error::Format(format!("bad class tag {tag:?}")))?;
            if !(1..=6).contains(&c) {
                return Err(Error::Format(format!("no hanging configuration {tag:?}")));
            }
            PolygonClass::HangingTriangle(c)
        }
        _ if tag.starts_with('N') => {
            let n: usize = tag[1..]
                .parse()
                .map_err(|_| Error::Format(format!("bad class tag {tag:?}")))?;
            if n < 4 {
                return Err(Error::Format(format!("class {tag:?} is below the quad floor")));
            }
            PolygonClass::NvClass(n)
        }
        _ => return Err(Error::Format(format!("bad class tag {tag:?}"))),
    };
    Ok(class)
}

fn check_header(c: &mut Cursor, kind: &str) -> Result<()> {
    let line = c.next_line()?;
    let want = format!("navem-{kind} v1");
    if line != want {
        return Err(Error::Format(format!(
            "not a {want} file: first line is {line:?}"
        )));
    }
    Ok(())
}

pub fn save_mesh(path: &Path, mesh: &Mesh) -> Result<()> {
    let mut out = String::from("navem-mesh v1\n");
    let _ = writeln!(out, "{}", mesh.n_vertices());
    for i in 0..mesh.n_vertices() {
        let p = mesh.vertex(i);
        let _ = writeln!(
            out,
            "{} {} {} {}",
            fmt_f64(p.x),
            fmt_f64(p.y),
            mesh.is_boundary(i) as u8,
            mesh.is_hanging(i) as u8
        );
    }
    let _ = writeln!(out, "{}", mesh.n_elements());
    for e in mesh.elements() {
        let _ = write!(out, "{}", e.len());
        for &i in e {
            let _ = write!(out, " {i}");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    let mut c = Cursor::new(&text);
    check_header(&mut c, "mesh")?;
    let nv: usize = {
        let line = c.next_line()?;
        line.trim()
            .parse()
            .map_err(|_| c.bad("vertex count", line))?
    };
    let mut vertices = Vec::with_capacity(nv);
    let mut boundary = Vec::with_capacity(nv);
    let mut hanging = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = c.next_line()?;
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 4 {
            return Err(c.bad("x y boundary hanging", line));
        }
        let x: f64 = t[0].parse().map_err(|_| c.bad("a float", line))?;
        let y: f64 = t[1].parse().map_err(|_| c.bad("a float", line))?;
        let flag = |s: &str| -> Result<bool> {
            match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(Error::Format(format!("line {}: flag must be 0 or 1", c.line_no))),
            }
        };
        vertices.push(Point2::new(x, y));
        boundary.push(flag(t[2])?);
        hanging.push(flag(t[3])?);
    }
    let ne: usize = {
        let line = c.next_line()?;
        line.trim()
            .parse()
            .map_err(|_| c.bad("element count", line))?
    };
    let mut elements = Vec::with_capacity(ne);
    for _ in 0..ne {
        let line = c.next_line()?;
        let mut t = line.split_whitespace();
        let k: usize = t
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| c.bad("an index count", line))?;
        let idx: Vec<usize> = t
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| c.bad("vertex indices", line))?;
        if idx.len() != k {
            return Err(c.bad(&format!("{k} indices"), line));
        }
        elements.push(idx);
    }
    Mesh::new(vertices, elements, boundary, hanging)
}

fn push_mlp(out: &mut String, name: &str, net: &Mlp) {
    let _ = write!(out, "net {name} layers {}", net.layer_sizes().len());
    for s in net.layer_sizes() {
        let _ = write!(out, " {s}");
    }
    out.push('\n');
    for (k, w) in net.weights().iter().enumerate() {
        let _ = writeln!(out, "W {k} {} {}", w.nrows(), w.ncols());
        for r in 0..w.nrows() {
            push_floats(out, w.row(r).iter());
        }
        let b = &net.biases()[k];
        let _ = writeln!(out, "b {k} {}", b.len());
        push_floats(out, b.iter());
    }
}

fn read_mlp(c: &mut Cursor, name: &str) -> Result<Mlp> {
    let t = c.tagged("net")?;
    if t.first() != Some(&name) || t.get(1) != Some(&"layers") {
        return Err(Error::Format(format!(
            "line {}: expected net {name} layers ...",
            c.line_no
        )));
    }
    let l = parse_usize(c, t.get(2), "layer count")?;
    if t.len() != 3 + l || l < 2 {
        return Err(Error::Format(format!("line {}: bad layer list", c.line_no)));
    }
    let mut sizes = Vec::with_capacity(l);
    for k in 0..l {
        sizes.push(parse_usize(c, t.get(3 + k), "a layer size")?);
    }
    let mut weights = Vec::with_capacity(l - 1);
    let mut biases = Vec::with_capacity(l - 1);
    for k in 0..l - 1 {
        let t = c.tagged("W")?;
        let kk = parse_usize(c, t.first(), "a layer index")?;
        let r = parse_usize(c, t.get(1), "a row count")?;
        let cols = parse_usize(c, t.get(2), "a column count")?;
        if kk != k {
            return Err(Error::Format(format!("line {}: layers out of order", c.line_no)));
        }
        let mut w: DMatrix<f64> = DMatrix::zeros(r, cols);
        for i in 0..r {
            let row = c.floats(cols)?;
            for (j, x) in row.into_iter().enumerate() {
                w[(i, j)] = x;
            }
        }
        weights.push(w);
        let t = c.tagged("b")?;
        let kk = parse_usize(c, t.first(), "a layer index")?;
        let n = parse_usize(c, t.get(1), "a length")?;
        if kk != k {
            return Err(Error::Format(format!("line {}: layers out of order", c.line_no)));
        }
        biases.push(DVector::from_vec(c.floats(n)?));
    }
    Mlp::from_parts(sizes, weights, biases)
}

/// Model artifact: both networks of one class plus training provenance.
pub fn save_model(path: &Path, pair: &PredictorPair, meta: &ModelMetadata) -> Result<()> {
    let mut out = String::from("navem-model v1\n");
    let _ = writeln!(out, "class {}", pair.class.label());
    let _ = writeln!(out, "seed {}", meta.seed);
    let _ = writeln!(out, "dataset-hash {:016x}", meta.dataset_hash);
    let _ = writeln!(out, "phi-loss {}", fmt_f64(meta.phi_loss));
    let _ = writeln!(out, "q-loss {}", fmt_f64(meta.q_loss));
    push_mlp(&mut out, "phi", &pair.phi_net);
    push_mlp(&mut out, "q", &pair.q_net);
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(PredictorPair, ModelMetadata)> {
    let text = std::fs::read_to_string(path)?;
    let mut c = Cursor::new(&text);
    check_header(&mut c, "model")?;
    let t = c.tagged("class")?;
    let class = parse_class(t.first().copied().unwrap_or(""))?;
    let Some(input_dim) = class.input_dim() else {
        return Err(Error::Format(format!(
            "class {} has a closed-form basis; no model applies",
            class.label()
        )));
    };
    let t = c.tagged("seed")?;
    let seed: u64 = t
        .first()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("line {}: bad seed", c.line_no)))?;
    let t = c.tagged("dataset-hash")?;
    let dataset_hash = t
        .first()
        .and_then(|s| u64::from_str_radix(s, 16).ok())
        .ok_or_else(|| Error::Format(format!("line {}: bad dataset hash", c.line_no)))?;
    let t = c.tagged("phi-loss")?;
    let phi_loss = parse_f64(&c, t.first(), "the phi loss")?;
    let t = c.tagged("q-loss")?;
    let q_loss = parse_f64(&c, t.first(), "the q loss")?;
    let phi_net = read_mlp(&mut c, "phi")?;
    let q_net = read_mlp(&mut c, "q")?;
    for (name, net) in [("phi", &phi_net), ("q", &q_net)] {
        if net.input_dim() != input_dim {
            return Err(Error::Format(format!(
                "{name} net takes {} inputs but class {} encodes {}",
                net.input_dim(),
                class.label(),
                input_dim
            )));
        }
    }
    Ok((
        PredictorPair {
            class,
            phi_net,
            q_net,
        },
        ModelMetadata {
            seed,
            dataset_hash,
            phi_loss,
            q_loss,
        },
    ))
}

/// Load a model that must serve `expected`: the wrong file fails here
/// instead of deep inside an assembly loop.
pub fn load_model_for(path: &Path, expected: PolygonClass) -> Result<(PredictorPair, ModelMetadata)> {
    let (pair, meta) = load_model(path)?;
    if pair.class != expected {
        return Err(Error::Mismatch(format!(
            "{} holds a {} model, needed {}",
            path.display(),
            pair.class.label(),
            expected.label()
        )));
    }
    Ok((pair, meta))
}

fn push_sample(out: &mut String, s: &TrainingSample) {
    let _ = writeln!(out, "sample {} {}", s.element.nv(), s.vertex);
    let _ = write!(out, "x0 {}", s.x0_coef.len());
    for x in &s.x0_coef {
        let _ = write!(out, " {}", fmt_f64(*x));
    }
    out.push('\n');
    for i in 0..s.element.nv() {
        let p = s.element.vertex(i);
        let _ = writeln!(
            out,
            "{} {} {}",
            fmt_f64(p.x),
            fmt_f64(p.y),
            s.element.is_hanging(i) as u8
        );
    }
    let _ = writeln!(out, "quadrature {}", s.boundary.points.len());
    for k in 0..s.boundary.points.len() {
        let p = s.boundary.points[k];
        let t = s.boundary.tangents[k];
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            fmt_f64(p.x),
            fmt_f64(p.y),
            fmt_f64(s.boundary.weights[k]),
            fmt_f64(t.x),
            fmt_f64(t.y),
            s.boundary.edges[k]
        );
    }
    out.push_str("trace ");
    push_floats(out, s.target_trace.iter());
    out.push_str("tangent ");
    push_floats(out, s.target_tangent.iter());
}

/// Datasets store the frame elements, the boundary rules, and the hat
/// targets. The Vandermonde factors are rebuilt on load from the shared
/// basis and checked against the stored arrays, so a file from a different
/// basis build cannot be silently mixed in.
pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    if ds.provenance.contains('\n') {
        return Err(Error::Format("provenance must be a single line".into()));
    }
    let mut out = String::from("navem-dataset v1\n");
    let _ = writeln!(out, "class {}", ds.class.label());
    let _ = writeln!(out, "provenance {}", ds.provenance);
    let _ = writeln!(out, "samples {}", ds.samples.len());
    for s in &ds.samples {
        push_sample(&mut out, s);
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_dataset(path: &Path, ctx: &SolverContext) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut c = Cursor::new(&text);
    check_header(&mut c, "dataset")?;
    let t = c.tagged("class")?;
    let class = parse_class(t.first().copied().unwrap_or(""))?;
    let provenance = c.tagged("provenance")?.join(" ");
    let t = c.tagged("samples")?;
    let count = parse_usize(&c, t.first(), "a sample count")?;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let t = c.tagged("sample")?;
        let nv = parse_usize(&c, t.first(), "a vertex count")?;
        let j = parse_usize(&c, t.get(1), "a vertex index")?;
        let t = c.tagged("x0")?;
        let k = parse_usize(&c, t.first(), "a coefficient count")?;
        if t.len() != 1 + k {
            return Err(Error::Format(format!("line {}: bad x0 list", c.line_no)));
        }
        let mut x0 = Vec::with_capacity(k);
        for i in 0..k {
            x0.push(parse_f64(&c, t.get(1 + i), "a coefficient")?);
        }
        let mut verts = Vec::with_capacity(nv);
        let mut flags = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = c.next_line()?;
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(c.bad("x y hanging", line));
            }
            let x: f64 = t[0].parse().map_err(|_| c.bad("a float", line))?;
            let y: f64 = t[1].parse().map_err(|_| c.bad("a float", line))?;
            verts.push(Point2::new(x, y));
            flags.push(t[2] == "1");
        }
        let element = Polygon::with_hanging(verts, flags)?;
        let sample = sample_on_frame_element(&element, j, x0, &ctx.shared, &ctx.base_phi)?;

        let t = c.tagged("quadrature")?;
        let npts = parse_usize(&c, t.first(), "a point count")?;
        if npts != sample.boundary.points.len() {
            return Err(Error::Format(format!(
                "line {}: {npts} quadrature points stored, rebuild produced {}",
                c.line_no,
                sample.boundary.points.len()
            )));
        }
        for k in 0..npts {
            let row = {
                let line = c.next_line()?;
                let vals: Vec<&str> = line.split_whitespace().collect();
                if vals.len() != 6 {
                    return Err(c.bad("px py w tx ty edge", line));
                }
                vals.iter()
                    .take(5)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<Vec<f64>, _>>()
                    .map_err(|_| c.bad("a quadrature row", line))?
            };
            let b = &sample.boundary;
            let same = row[0] == b.points[k].x
                && row[1] == b.points[k].y
                && row[2] == b.weights[k]
                && row[3] == b.tangents[k].x
                && row[4] == b.tangents[k].y;
            if !same {
                return Err(Error::Format(format!(
                    "line {}: stored quadrature disagrees with the rebuild; \
                     the file was written against a different basis or rule",
                    c.line_no
                )));
            }
        }
        let t = c.tagged("trace")?;
        let trace: Vec<f64> = t
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("line {}: bad trace row", c.line_no)))?;
        let t = c.tagged("tangent")?;
        let tangent: Vec<f64> = t
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("line {}: bad tangent row", c.line_no)))?;
        let stored_match = trace.len() == sample.target_trace.len()
            && tangent.len() == sample.target_tangent.len()
            && trace
                .iter()
                .zip(sample.target_trace.iter())
                .all(|(a, b)| a == b)
            && tangent
                .iter()
                .zip(sample.target_tangent.iter())
                .all(|(a, b)| a == b);
        if !stored_match {
            return Err(Error::Format(format!(
                "sample ending at line {}: stored targets disagree with the rebuild",
                c.line_no
            )));
        }
        samples.push(sample);
    }
    Ok(Dataset {
        class,
        samples,
        provenance,
    })
}

/// Shared-basis artifact: the orthonormalized harmonic family and the
/// reference corner function, enough to rebuild a SolverContext without
/// redoing the Gram factorization or the pole fit.
pub fn save_basis(path: &Path, ctx: &SolverContext) -> Result<()> {
    let mut out = String::from("navem-basis v1\n");
    let shared = &ctx.shared;
    let _ = writeln!(out, "ell {}", shared.ell);
    let _ = writeln!(out, "h-ref {}", fmt_f64(shared.h_ref));
    let _ = writeln!(out, "r {} {}", shared.r.nrows(), shared.r.ncols());
    for i in 0..shared.r.nrows() {
        push_floats(&mut out, shared.r.row(i).iter());
    }
    let phi = &ctx.base_phi;
    let _ = writeln!(out, "phi {} {}", phi.n1, phi.n2);
    out.push_str("poles ");
    push_floats(&mut out, phi.poles.iter());
    out.push_str("d ");
    push_floats(&mut out, phi.d.iter());
    out.push_str("c1 ");
    push_floats(&mut out, phi.c1.iter());
    out.push_str("c2 ");
    push_floats(&mut out, phi.c2.iter());
    let _ = writeln!(out, "residual {}", fmt_f64(phi.residual));
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_basis(path: &Path) -> Result<SolverContext> {
    let text = std::fs::read_to_string(path)?;
    let mut c = Cursor::new(&text);
    check_header(&mut c, "basis")?;
    let t = c.tagged("ell")?;
    let ell = parse_usize(&c, t.first(), "the harmonic degree")?;
    let t = c.tagged("h-ref")?;
    let h_ref = parse_f64(&c, t.first(), "the reference scale")?;
    let t = c.tagged("r")?;
    let nr = parse_usize(&c, t.first(), "a row count")?;
    let nc = parse_usize(&c, t.get(1), "a column count")?;
    let mut r: DMatrix<f64> = DMatrix::zeros(nr, nc);
    for i in 0..nr {
        let row = c.floats(nc)?;
        for (j, x) in row.into_iter().enumerate() {
            r[(i, j)] = x;
        }
    }
    let t = c.tagged("phi")?;
    let n1 = parse_usize(&c, t.first(), "the pole count")?;
    let n2 = parse_usize(&c, t.get(1), "the polynomial degree")?;
    let grab = |c: &mut Cursor, tag: &str, n: usize| -> Result<Vec<f64>> {
        let t = c.tagged(tag)?;
        if t.len() != n {
            return Err(Error::Format(format!(
                "line {}: {tag} should list {n} floats",
                c.line_no
            )));
        }
        t.iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("line {}: bad {tag} row", c.line_no)))
    };
    let poles = grab(&mut c, "poles", n1)?;
    let d = grab(&mut c, "d", n1)?;
    let c1 = DVector::from_vec(grab(&mut c, "c1", n1)?);
    let c2 = DVector::from_vec(grab(&mut c, "c2", n2 + 1)?);
    let t = c.tagged("residual")?;
    let residual = parse_f64(&c, t.first(), "the fit residual")?;
    if ell + 1 == 0 || nr != nc {
        return Err(Error::Format("orthonormalization matrix must be square".into()));
    }
    Ok(SolverContext {
        shared: OrthonormalHarmonicBasis { ell, h_ref, r },
        base_phi: PhiFunction {
            n1,
            n2,
            poles,
            d,
            c1,
            c2,
            residual,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::families::{rdqm, RdqmParams};
    use crate::harmonic::orthonormalize_basis;
    use crate::training::build_rdqm_dataset;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("navem-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn meshes_round_trip_bit_exactly() {
        let mesh = rdqm(RdqmParams { n: 3, distortion: 0.2 }, 11).unwrap();
        let path = tmp("mesh.txt");
        save_mesh(&path, &mesh).unwrap();
        let back = load_mesh(&path).unwrap();
        assert_eq!(mesh.n_vertices(), back.n_vertices());
        assert_eq!(mesh.elements(), back.elements());
        for i in 0..mesh.n_vertices() {
            assert_eq!(mesh.vertex(i), back.vertex(i));
            assert_eq!(mesh.is_boundary(i), back.is_boundary(i));
            assert_eq!(mesh.is_hanging(i), back.is_hanging(i));
        }
        save_mesh(&tmp("mesh2.txt"), &back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(tmp("mesh2.txt")).unwrap()
        );
    }

    #[test]
    fn models_round_trip_and_forward_identically() {
        let pair = PredictorPair {
            class: PolygonClass::NvClass(4),
            phi_net: Mlp::glorot(&[6, 13, 44], 5).unwrap(),
            q_net: Mlp::glorot(&[6, 9, 44], 6).unwrap(),
        };
        let meta = ModelMetadata {
            seed: 5,
            dataset_hash: 0xdead_beef_0123_4567,
            phi_loss: 3.5e-3,
            q_loss: 1.25e-2,
        };
        let path = tmp("model.txt");
        save_model(&path, &pair, &meta).unwrap();
        let (back, meta2) = load_model(&path).unwrap();
        assert_eq!(meta, meta2);
        assert_eq!(back.class, pair.class);
        let x = DMatrix::from_fn(6, 3, |i, j| (i as f64) - 0.3 * (j as f64));
        assert_eq!(
            pair.phi_net.forward(&x).unwrap(),
            back.phi_net.forward(&x).unwrap()
        );
        assert_eq!(
            pair.q_net.forward(&x).unwrap(),
            back.q_net.forward(&x).unwrap()
        );
    }

    #[test]
    fn corrupted_model_headers_fail_cleanly() {
        let path = tmp("broken.txt");
        std::fs::write(&path, "navem-model v2\nclass N4\n").unwrap();
        match load_model(&path) {
            Err(Error::Format(msg)) => assert!(msg.contains("navem-model v1")),
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn class_guard_rejects_the_wrong_model_file() {
        let pair = PredictorPair {
            class: PolygonClass::NvClass(6),
            phi_net: Mlp::glorot(&[10, 8, 44], 1).unwrap(),
            q_net: Mlp::glorot(&[10, 8, 44], 2).unwrap(),
        };
        let meta = ModelMetadata {
            seed: 1,
            dataset_hash: 0,
            phi_loss: 0.1,
            q_loss: 0.1,
        };
        let path = tmp("n6.txt");
        save_model(&path, &pair, &meta).unwrap();
        match load_model_for(&path, PolygonClass::NvClass(4)) {
            Err(Error::Mismatch(msg)) => {
                assert!(msg.contains("N6") && msg.contains("N4"), "{msg}");
            }
            other => panic!("expected a class mismatch, got {other:?}"),
        }
    }

    #[test]
    fn model_files_reject_input_dim_lies() {
        let pair = PredictorPair {
            class: PolygonClass::NvClass(4),
            phi_net: Mlp::glorot(&[6, 8, 44], 1).unwrap(),
            q_net: Mlp::glorot(&[6, 8, 44], 2).unwrap(),
        };
        let meta = ModelMetadata {
            seed: 1,
            dataset_hash: 0,
            phi_loss: 0.1,
            q_loss: 0.1,
        };
        let path = tmp("lied.txt");
        save_model(&path, &pair, &meta).unwrap();
        let doctored = std::fs::read_to_string(&path)
            .unwrap()
            .replace("class N4", "class N5");
        std::fs::write(&path, doctored).unwrap();
        match load_model(&path) {
            Err(Error::Format(msg)) => assert!(msg.contains("inputs"), "{msg}"),
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn datasets_round_trip_through_the_rebuild_check() {
        let shared = orthonormalize_basis(6, 3.0, 40).unwrap();
        let phi = PhiFunction::with_defaults().unwrap();
        let ctx = SolverContext {
            shared,
            base_phi: phi,
        };
        let ds = build_rdqm_dataset(3, 21, &ctx.shared, &ctx.base_phi).unwrap();
        let path = tmp("dataset.txt");
        save_dataset(&path, &ds).unwrap();
        let back = load_dataset(&path, &ctx).unwrap();
        assert_eq!(back.samples.len(), ds.samples.len());
        assert_eq!(back.class, ds.class);
        assert_eq!(back.provenance, ds.provenance);
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            assert_eq!(a.v, b.v);
            assert_eq!(a.v_t, b.v_t);
            assert_eq!(a.target_trace, b.target_trace);
        }
        save_dataset(&tmp("dataset2.txt"), &back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(tmp("dataset2.txt")).unwrap()
        );
    }

    #[test]
    fn basis_files_rebuild_the_context() {
        let ctx = SolverContext {
            shared: orthonormalize_basis(8, 3.0, 40).unwrap(),
            base_phi: PhiFunction::with_defaults().unwrap(),
        };
        let path = tmp("basis.txt");
        save_basis(&path, &ctx).unwrap();
        let back = load_basis(&path).unwrap();
        assert_eq!(back.shared.ell, ctx.shared.ell);
        assert_eq!(back.shared.r, ctx.shared.r);
        assert_eq!(back.base_phi, ctx.base_phi);
    }

    #[test]
    fn hashes_are_stable() {
        // Reference values of FNV-1a: empty input and "a".
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
