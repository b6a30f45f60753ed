//! Mesh, mask, feature-image, checkpoint and sample-file readers/writers,
//! plus the CSV outputs. Binary formats are little-endian.

use std::fmt::Write as _;
use std::path::Path;

use sesdf_core::calib::Mask;
use sesdf_core::features::FeatureImage;
use sesdf_core::geometry::TriangleMesh;
use sesdf_core::metrics::AngleRow;
use sesdf_core::nn::{EpochLoss, Matrix, ModelConfig, ParamSet, PointSet, SceneSamples, SesdfModel, Variant, RAW_WIDTH};
use sesdf_core::{Mat3, Vec3};

use crate::{read_file, write_file, FormatError};

// ---- OBJ ----

/// Reads `v x y z` and triangular `f i j k` lines (1-based; `i/t/n` forms
/// use the vertex index). Everything else is ignored.
pub fn parse_obj(text: &str, path: &Path) -> Result<TriangleMesh, FormatError> {
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it.take(3).map(str::parse).collect::<Result<_, _>>().map_err(|e| FormatError::parse(path, format!("line {}: {e}", ln + 1)))?;
                if c.len() != 3 {
                    return Err(FormatError::parse(path, format!("line {}: vertex needs 3 coordinates", ln + 1)));
                }
                verts.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<&str> = it.collect();
                if idx.len() != 3 {
                    return Err(FormatError::parse(path, format!("line {}: only triangles are supported", ln + 1)));
                }
                let mut f = [0u32; 3];
                for (k, s) in idx.iter().enumerate() {
                    let i: u32 = s.split('/').next().unwrap_or("").parse().map_err(|e| FormatError::parse(path, format!("line {}: {e}", ln + 1)))?;
                    if i == 0 {
                        return Err(FormatError::parse(path, format!("line {}: indices are 1-based", ln + 1)));
                    }
                    f[k] = i - 1;
                }
                faces.push(f);
            }
            _ => {}
        }
    }
    TriangleMesh::new(verts, faces).map_err(|e| FormatError::parse(path, e.to_string()))
}

pub fn read_obj(path: &Path) -> Result<TriangleMesh, FormatError> {
    let bytes = read_file(path)?;
    parse_obj(&String::from_utf8_lossy(&bytes), path)
}

pub fn obj_string(mesh: &TriangleMesh) -> String {
    let mut s = String::with_capacity(mesh.vertices().len() * 40 + mesh.faces().len() * 24);
    for v in mesh.vertices() {
        // `{:?}` prints the shortest round-tripping form.
        let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<(), FormatError> {
    write_file(path, obj_string(mesh).as_bytes())
}

// ---- PGM (binary P5) masks ----

pub fn mask_to_pgm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend(mask.data.iter().map(|b| if *b { 255u8 } else { 0 }));
    out
}

/// Any non-zero pixel is inside. Accepts `#` comments in the header.
pub fn pgm_to_mask(bytes: &[u8], path: &Path) -> Result<Mask, FormatError> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(FormatError::parse(path, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(FormatError::parse(path, "not a binary (P5) PGM"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| FormatError::parse(path, format!("PGM header: {e}")));
    let (w, h, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if max == 0 || max > 255 {
        return Err(FormatError::parse(path, "only 8-bit PGM is supported"));
    }
    let body = bytes.get(pos..pos + w * h).ok_or_else(|| FormatError::parse(path, "truncated PGM data"))?;
    Ok(Mask { width: w, height: h, data: body.iter().map(|b| *b != 0).collect() })
}

pub fn read_pgm(path: &Path) -> Result<Mask, FormatError> {
    pgm_to_mask(&read_file(path)?, path)
}

pub fn write_pgm(path: &Path, mask: &Mask) -> Result<(), FormatError> {
    write_file(path, &mask_to_pgm(mask))
}

// ---- little-endian reader ----

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path, magic: &[u8; 4]) -> Result<Self, FormatError> {
        if bytes.len() < 4 || &bytes[..4] != magic {
            return Err(FormatError::parse(path, format!("missing {} magic", String::from_utf8_lossy(magic))));
        }
        Ok(Reader { bytes, pos: 4, path })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let s = self.bytes.get(self.pos..self.pos + n).ok_or_else(|| FormatError::parse(self.path, "truncated file"))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        Ok(self.take(n * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        Ok(self.take(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(self) -> Result<(), FormatError> {
        if self.pos != self.bytes.len() {
            return Err(FormatError::parse(self.path, "trailing bytes"));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("count fits in u32").to_le_bytes());
}

// ---- SESF feature images ----

pub fn feature_image_bytes(img: &FeatureImage) -> Vec<u8> {
    let mut out = b"SESF".to_vec();
    put_u32(&mut out, img.channels);
    put_u32(&mut out, img.height);
    put_u32(&mut out, img.width);
    out.reserve(img.data.len() * 4);
    img.data.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    out
}

pub fn parse_feature_image(bytes: &[u8], path: &Path) -> Result<FeatureImage, FormatError> {
    let mut r = Reader::new(bytes, path, b"SESF")?;
    let (c, h, w) = (r.u32()?, r.u32()?, r.u32()?);
    let data = r.f32s(c * h * w)?;
    r.finish()?;
    Ok(FeatureImage { channels: c, width: w, height: h, data })
}

pub fn read_feature_image(path: &Path) -> Result<FeatureImage, FormatError> {
    parse_feature_image(&read_file(path)?, path)
}

pub fn write_feature_image(path: &Path, img: &FeatureImage) -> Result<(), FormatError> {
    write_file(path, &feature_image_bytes(img))
}

// ---- SESW checkpoints ----

fn config_text(c: &ModelConfig) -> String {
    let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    format!(
        "variant={}\noctaves={}\nsd_hidden={}\no_hidden={}\nskip={}\n",
        c.variant.name(),
        c.encoding_octaves,
        list(&c.sd_hidden),
        list(&c.o_hidden),
        c.skip
    )
}

fn parse_config_text(text: &str, path: &Path) -> Result<ModelConfig, FormatError> {
    let mut c = ModelConfig::default();
    let bad = |msg: String| FormatError::parse(path, msg);
    let list = |v: &str| -> Result<Vec<usize>, FormatError> {
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',').map(|x| x.parse().map_err(|e| bad(format!("hidden widths: {e}")))).collect()
    };
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("bad config line {line:?}")))?;
        match k {
            "variant" => c.variant = Variant::parse(v).ok_or_else(|| bad(format!("unknown variant {v}")))?,
            "octaves" => c.encoding_octaves = v.parse().map_err(|e| bad(format!("octaves: {e}")))?,
            "sd_hidden" => c.sd_hidden = list(v)?,
            "o_hidden" => c.o_hidden = list(v)?,
            "skip" => c.skip = v.parse().map_err(|e| bad(format!("skip: {e}")))?,
            _ => return Err(bad(format!("unknown config key {k}"))),
        }
    }
    Ok(c)
}

/// `SESW`, tensor count, length-prefixed model configuration (key=value
/// text), then per tensor `rows, cols` and the f64 entries row-major.
pub fn checkpoint_bytes(model: &SesdfModel) -> Vec<u8> {
    let mut out = b"SESW".to_vec();
    put_u32(&mut out, model.params.tensors.len());
    let cfg = config_text(&model.config);
    put_u32(&mut out, cfg.len());
    out.extend_from_slice(cfg.as_bytes());
    for t in &model.params.tensors {
        put_u32(&mut out, t.rows);
        put_u32(&mut out, t.cols);
        t.data.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    }
    out
}

pub fn parse_checkpoint(bytes: &[u8], path: &Path) -> Result<SesdfModel, FormatError> {
    let mut r = Reader::new(bytes, path, b"SESW")?;
    let n = r.u32()?;
    let len = r.u32()?;
    let cfg = parse_config_text(&String::from_utf8_lossy(r.take(len)?), path)?;
    let mut params = ParamSet::default();
    for _ in 0..n {
        let (rows, cols) = (r.u32()?, r.u32()?);
        params.push(Matrix::from_vec(rows, cols, r.f64s(rows * cols)?));
    }
    r.finish()?;
    SesdfModel::from_params(cfg, params).map_err(|e| FormatError::parse(path, e.to_string()))
}

pub fn read_checkpoint(path: &Path) -> Result<SesdfModel, FormatError> {
    parse_checkpoint(&read_file(path)?, path)
}

pub fn write_checkpoint(path: &Path, model: &SesdfModel) -> Result<(), FormatError> {
    write_file(path, &checkpoint_bytes(model))
}

// ---- SESB sample batches ----

const VIEW_RECORD: usize = RAW_WIDTH + 3 + 2;

fn put_points(out: &mut Vec<u8>, set: &PointSet, surface: bool) {
    let f = |out: &mut Vec<u8>, x: f64| out.extend_from_slice(&(x as f32).to_le_bytes());
    for p in 0..set.len() {
        f(out, set.d_body[p]);
        if surface {
            set.n_gt[p].iter().for_each(|x| f(out, *x));
        } else {
            f(out, if set.labels[p] { 1.0 } else { 0.0 });
        }
        for v in 0..set.views {
            let r = p * set.views + v;
            set.raw[r * RAW_WIDTH..(r + 1) * RAW_WIDTH].iter().for_each(|x| f(out, *x));
            set.n_cam[r * 3..r * 3 + 3].iter().for_each(|x| f(out, *x));
            f(out, set.z[r]);
            f(out, set.scores[r]);
        }
    }
}

fn get_points(r: &mut Reader, views: usize, count: usize, surface: bool) -> Result<PointSet, FormatError> {
    let mut set = PointSet::new(views);
    let head = if surface { 4 } else { 2 };
    for _ in 0..count {
        let rec: Vec<f64> = r.f32s(head + views * VIEW_RECORD)?.into_iter().map(f64::from).collect();
        set.d_body.push(rec[0]);
        if surface {
            set.n_gt.push(Vec3::new(rec[1], rec[2], rec[3]));
        } else {
            set.labels.push(rec[1] > 0.5);
        }
        for v in rec[head..].chunks_exact(VIEW_RECORD) {
            set.raw.extend_from_slice(&v[..RAW_WIDTH]);
            set.n_cam.extend_from_slice(&v[RAW_WIDTH..RAW_WIDTH + 3]);
            set.z.push(v[RAW_WIDTH + 3]);
            set.scores.push(v[RAW_WIDTH + 4]);
        }
    }
    Ok(set)
}

/// `SESB`, then u32 views, surface count, occupancy count, per-view record
/// width; the view rotations (9 f32 each, row-major); surface records
/// `d', n_gt, views x [raw, n_cam, z, score]`; occupancy records
/// `d', label, views x [...]`. All values f32.
pub fn samples_bytes(s: &SceneSamples) -> Vec<u8> {
    let views = s.occupancy.views;
    let mut out = b"SESB".to_vec();
    put_u32(&mut out, views);
    put_u32(&mut out, s.surface.len());
    put_u32(&mut out, s.occupancy.len());
    put_u32(&mut out, VIEW_RECORD);
    for r in &s.rotations {
        for i in 0..3 {
            for j in 0..3 {
                out.extend_from_slice(&(r[(i, j)] as f32).to_le_bytes());
            }
        }
    }
    put_points(&mut out, &s.surface, true);
    put_points(&mut out, &s.occupancy, false);
    out
}

pub fn parse_samples(bytes: &[u8], path: &Path) -> Result<SceneSamples, FormatError> {
    let mut r = Reader::new(bytes, path, b"SESB")?;
    let (views, ns, no, width) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    if width != VIEW_RECORD {
        return Err(FormatError::parse(path, format!("view record width {width}, expected {VIEW_RECORD}")));
    }
    let mut rotations = Vec::with_capacity(views);
    for _ in 0..views {
        let m: Vec<f64> = r.f32s(9)?.into_iter().map(f64::from).collect();
        rotations.push(Mat3::from_row_slice(&m));
    }
    let surface = get_points(&mut r, views, ns, true)?;
    let occupancy = get_points(&mut r, views, no, false)?;
    r.finish()?;
    Ok(SceneSamples { rotations, surface, occupancy })
}

pub fn read_samples(path: &Path) -> Result<SceneSamples, FormatError> {
    parse_samples(&read_file(path)?, path)
}

pub fn write_samples(path: &Path, s: &SceneSamples) -> Result<(), FormatError> {
    write_file(path, &samples_bytes(s))
}

// ---- CSV outputs ----

pub fn loss_csv(curve: &[EpochLoss]) -> String {
    let mut s = String::from("epoch,L_s,L_o,L_r,total\n");
    for e in curve {
        let l = &e.losses;
        let _ = writeln!(s, "{},{},{},{},{}", e.epoch, l.surface, l.occupancy, l.eikonal, l.total);
    }
    s
}

/// `angle,chamfer,p2s`; the closing mean row has angle `mean`.
pub fn metrics_csv(rows: &[AngleRow]) -> String {
    let mut s = String::from("angle,chamfer,p2s\n");
    for r in rows {
        let angle = if r.angle_deg.is_nan() { "mean".to_string() } else { r.angle_deg.to_string() };
        let _ = writeln!(s, "{angle},{},{}", r.chamfer, r.p2s);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use sesdf_core::geometry::icosphere;

    #[test]
    fn obj_round_trip_is_exact() {
        let m = icosphere(1.3, 2);
        let back = parse_obj(&obj_string(&m), Path::new("x.obj")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn obj_ignores_other_lines() {
        let text = "# c\nvn 0 0 1\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1/1 2/2/1 3/3/1\n";
        let m = parse_obj(text, Path::new("x.obj")).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
        assert!(parse_obj("v 0 0 0\nf 1 2 3 4\n", Path::new("x.obj")).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let mut m = Mask::new(5, 3);
        m.data[1] = true;
        m.data[14] = true;
        let back = pgm_to_mask(&mask_to_pgm(&m), Path::new("m.pgm")).unwrap();
        assert_eq!(back, m);
        assert!(pgm_to_mask(b"P2\n1 1\n255\n0", Path::new("m.pgm")).is_err());
    }

    #[test]
    fn sesf_round_trip() {
        let mut img = FeatureImage::new(2, 3, 2);
        img.set(1, 2, 1, f32::INFINITY);
        img.set(0, 0, 0, -0.5);
        let b = feature_image_bytes(&img);
        assert_eq!(&b[..4], b"SESF");
        assert_eq!(b.len(), 16 + 4 * 12);
        assert_eq!(parse_feature_image(&b, Path::new("f")).unwrap(), img);
        assert!(parse_feature_image(&b[..b.len() - 1], Path::new("f")).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = ModelConfig { variant: Variant::RawDistance, sd_hidden: vec![8, 6], o_hidden: vec![5], ..Default::default() };
        let m = SesdfModel::new(cfg, 3).unwrap();
        let back = parse_checkpoint(&checkpoint_bytes(&m), Path::new("c")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn csv_headers() {
        assert!(loss_csv(&[]).starts_with("epoch,L_s,L_o,L_r,total"));
        let rows = [AngleRow { angle_deg: 45.0, chamfer: 0.1, p2s: 0.2 }, AngleRow { angle_deg: f64::NAN, chamfer: 0.1, p2s: 0.2 }];
        assert_eq!(metrics_csv(&rows), "angle,chamfer,p2s\n45,0.1,0.2\nmean,0.1,0.2\n");
    }
}
