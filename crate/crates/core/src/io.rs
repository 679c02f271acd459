//! On-disk formats: the scene container, feature-image dumps, and
//! environment-map files.
//!
//! The scene container is a single self-describing binary file: an 8-byte
//! magic, a format version, a JSON header (bounds, seeds, version), then a
//! section table addressing little-endian binary sections for the field,
//! point sets, and cameras. Scalars round-trip bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::env::EnvironmentMap;
use crate::error::{Error, Result};
use crate::scene::{CameraView, FeatureImage, PointSet, ProbabilityField, Voxel};
use crate::sh::{CHANNELS, SH_COEFFS};

const MAGIC: &[u8; 8] = b"PFSCENE1";
const FORMAT_VERSION: u32 = 1;

const SEC_FIELD: &[u8; 8] = b"FIELD\0\0\0";
const SEC_POINTS: &[u8; 8] = b"POINTS\0\0";
const SEC_CAMERAS: &[u8; 8] = b"CAMERAS\0";

/// JSON header carried by every scene container.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SceneHeader {
    pub version: u32,
    /// Seed the scene was generated from.
    pub seed: u64,
    /// Seed of the appearance oracle.
    pub oracle_seed: u64,
    pub bounds_min: [f64; 3],
    pub extent: f64,
    pub resolution: u32,
}

/// A self-contained scene: header, field, cameras, and optional point sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub header: SceneHeader,
    pub field: ProbabilityField,
    pub cameras: Vec<CameraView>,
    pub points: Vec<PointSet>,
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn write_vec3<W: Write>(w: &mut W, v: &Vector3<f64>) -> Result<()> {
    write_f64(w, v.x)?;
    write_f64(w, v.y)?;
    write_f64(w, v.z)
}

fn read_vec3<R: Read>(r: &mut R) -> Result<Vector3<f64>> {
    Ok(Vector3::new(read_f64(r)?, read_f64(r)?, read_f64(r)?))
}

fn encode_field(field: &ProbabilityField) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_u64(&mut buf, field.voxels.len() as u64)?;
    for v in &field.voxels {
        for i in v.index {
            write_u32(&mut buf, i)?;
        }
        buf.push(v.level);
        write_vec3(&mut buf, &v.center)?;
        write_f64(&mut buf, v.size)?;
        write_f64(&mut buf, v.weight)?;
    }
    Ok(buf)
}

fn decode_field(bytes: &[u8], header: &SceneHeader) -> Result<ProbabilityField> {
    let mut r = bytes;
    let count = read_u64(&mut r)? as usize;
    let mut voxels = Vec::with_capacity(count);
    for _ in 0..count {
        let index = [read_u32(&mut r)?, read_u32(&mut r)?, read_u32(&mut r)?];
        let mut level = [0u8; 1];
        r.read_exact(&mut level)?;
        let center = read_vec3(&mut r)?;
        let size = read_f64(&mut r)?;
        let weight = read_f64(&mut r)?;
        voxels.push(Voxel {
            index,
            level: level[0],
            center,
            size,
            weight,
        });
    }
    ProbabilityField::new(
        header.resolution,
        Vector3::from(header.bounds_min),
        header.extent,
        voxels,
    )
}

fn encode_points(sets: &[PointSet]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_u32(&mut buf, sets.len() as u32)?;
    for set in sets {
        write_u64(&mut buf, set.len() as u64)?;
        for p in &set.positions {
            write_vec3(&mut buf, p)?;
        }
        for &o in &set.opacities {
            write_f64(&mut buf, o)?;
        }
        for block in &set.sh_coeffs {
            for ch in block {
                for &v in ch {
                    write_f64(&mut buf, v)?;
                }
            }
        }
    }
    Ok(buf)
}

fn decode_points(bytes: &[u8]) -> Result<Vec<PointSet>> {
    let mut r = bytes;
    let sets = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(sets);
    for _ in 0..sets {
        let n = read_u64(&mut r)? as usize;
        let mut set = PointSet::with_capacity(n);
        let mut positions = Vec::with_capacity(n);
        for _ in 0..n {
            positions.push(read_vec3(&mut r)?);
        }
        let mut opacities = Vec::with_capacity(n);
        for _ in 0..n {
            opacities.push(read_f64(&mut r)?);
        }
        for pos in positions.into_iter().zip(opacities) {
            let mut block = [[0.0; SH_COEFFS]; CHANNELS];
            for ch in block.iter_mut() {
                for v in ch.iter_mut() {
                    *v = read_f64(&mut r)?;
                }
            }
            set.push(pos.0, pos.1, block);
        }
        // SH blocks follow all positions/opacities; re-read in order.
        out.push(set);
    }
    Ok(out)
}

fn encode_cameras(cameras: &[CameraView]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_u32(&mut buf, cameras.len() as u32)?;
    for c in cameras {
        write_f64(&mut buf, c.fx)?;
        write_f64(&mut buf, c.fy)?;
        write_f64(&mut buf, c.cx)?;
        write_f64(&mut buf, c.cy)?;
        write_u32(&mut buf, c.width)?;
        write_u32(&mut buf, c.height)?;
        for r in 0..3 {
            for col in 0..3 {
                write_f64(&mut buf, c.rotation[(r, col)])?;
            }
        }
        write_vec3(&mut buf, &c.translation)?;
        write_f64(&mut buf, c.z_near)?;
        match c.distortion {
            Some([k1, k2]) => {
                buf.push(1);
                write_f64(&mut buf, k1)?;
                write_f64(&mut buf, k2)?;
            }
            None => buf.push(0),
        }
    }
    Ok(buf)
}

fn decode_cameras(bytes: &[u8]) -> Result<Vec<CameraView>> {
    let mut r = bytes;
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let fx = read_f64(&mut r)?;
        let fy = read_f64(&mut r)?;
        let cx = read_f64(&mut r)?;
        let cy = read_f64(&mut r)?;
        let width = read_u32(&mut r)?;
        let height = read_u32(&mut r)?;
        let mut rotation = Matrix3::zeros();
        for row in 0..3 {
            for col in 0..3 {
                rotation[(row, col)] = read_f64(&mut r)?;
            }
        }
        let translation = read_vec3(&mut r)?;
        let z_near = read_f64(&mut r)?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let distortion = if flag[0] == 1 {
            Some([read_f64(&mut r)?, read_f64(&mut r)?])
        } else {
            None
        };
        let camera = CameraView {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            translation,
            z_near,
            distortion,
        };
        camera.validate()?;
        out.push(camera);
    }
    Ok(out)
}

impl Scene {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        write_u32(&mut w, FORMAT_VERSION)?;
        let json = serde_json::to_vec(&self.header)
            .map_err(|e| Error::Format(format!("header encode: {e}")))?;
        write_u64(&mut w, json.len() as u64)?;
        w.write_all(&json)?;

        let sections: Vec<(&[u8; 8], Vec<u8>)> = vec![
            (SEC_FIELD, encode_field(&self.field)?),
            (SEC_POINTS, encode_points(&self.points)?),
            (SEC_CAMERAS, encode_cameras(&self.cameras)?),
        ];
        write_u32(&mut w, sections.len() as u32)?;
        // Table: tag, offset (from file start), length.
        let table_start = MAGIC.len() as u64 + 4 + 8 + json.len() as u64 + 4;
        let mut offset = table_start + sections.len() as u64 * 24;
        for (tag, body) in &sections {
            w.write_all(*tag)?;
            write_u64(&mut w, offset)?;
            write_u64(&mut w, body.len() as u64)?;
            offset += body.len() as u64;
        }
        for (_, body) in &sections {
            w.write_all(body)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Scene> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let json_len = read_u64(&mut r)? as usize;
        let mut json = vec![0u8; json_len];
        r.read_exact(&mut json)?;
        let header: SceneHeader = serde_json::from_slice(&json)
            .map_err(|e| Error::Format(format!("header decode: {e}")))?;

        let section_count = read_u32(&mut r)? as usize;
        let mut table = Vec::with_capacity(section_count);
        for _ in 0..section_count {
            let mut tag = [0u8; 8];
            r.read_exact(&mut tag)?;
            let offset = read_u64(&mut r)?;
            let len = read_u64(&mut r)?;
            table.push((tag, offset, len));
        }
        let mut field = None;
        let mut points = Vec::new();
        let mut cameras = Vec::new();
        for (tag, offset, len) in table {
            r.seek(SeekFrom::Start(offset))?;
            let mut body = vec![0u8; len as usize];
            r.read_exact(&mut body)?;
            match &tag {
                t if t == SEC_FIELD => field = Some(decode_field(&body, &header)?),
                t if t == SEC_POINTS => points = decode_points(&body)?,
                t if t == SEC_CAMERAS => cameras = decode_cameras(&body)?,
                _ => {} // unknown sections are skippable by design
            }
        }
        Ok(Scene {
            header,
            field: field.ok_or_else(|| Error::Format("missing field section".into()))?,
            cameras,
            points,
        })
    }
}

/// JSON sidecar for a feature dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub dtype: String,
    pub layout: String,
    pub transmittance_file: String,
}

/// Write a feature image as a flat 32-bit float binary (HWC) plus a JSON
/// sidecar and a companion transmittance plane.
pub fn save_feature_image(image: &FeatureImage, base: &Path) -> Result<()> {
    let bin_path = base.with_extension("f32");
    let trans_path = base.with_extension("trans.f32");
    let json_path = base.with_extension("json");

    let mut w = BufWriter::new(File::create(&bin_path)?);
    for px in &image.features {
        for &v in px {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(&trans_path)?);
    for &t in &image.transmittance {
        w.write_all(&(t as f32).to_le_bytes())?;
    }
    w.flush()?;

    let sidecar = FeatureSidecar {
        width: image.width,
        height: image.height,
        channels: CHANNELS as u32,
        dtype: "f32le".into(),
        layout: "hwc".into(),
        transmittance_file: trans_path
            .file_name()
            .unwrap()
            .to_string_lossy()
            .into_owned(),
    };
    let json = serde_json::to_vec_pretty(&sidecar)
        .map_err(|e| Error::Format(format!("sidecar encode: {e}")))?;
    std::fs::write(json_path, json)?;
    Ok(())
}

/// Read a feature dump written by [`save_feature_image`].
pub fn load_feature_image(base: &Path) -> Result<FeatureImage> {
    let json = std::fs::read(base.with_extension("json"))?;
    let sidecar: FeatureSidecar = serde_json::from_slice(&json)
        .map_err(|e| Error::Format(format!("sidecar decode: {e}")))?;
    let bytes = std::fs::read(base.with_extension("f32"))?;
    let n = sidecar.width as usize * sidecar.height as usize;
    if bytes.len() != n * CHANNELS * 4 {
        return Err(Error::Format("feature payload size mismatch".into()));
    }
    let mut image = FeatureImage::new(sidecar.width, sidecar.height);
    for (i, px) in image.features.iter_mut().enumerate() {
        for (c, v) in px.iter_mut().enumerate() {
            let at = (i * CHANNELS + c) * 4;
            *v = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64;
        }
    }
    let trans = std::fs::read(base.with_extension("trans.f32"))?;
    if trans.len() == n * 4 {
        for (i, t) in image.transmittance.iter_mut().enumerate() {
            *t = f32::from_le_bytes(trans[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
        }
    }
    Ok(image)
}

/// JSON header for an environment-map file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvMapHeader {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub dtype: String,
}

/// Write an environment map as flat 32-bit floats plus a JSON header.
pub fn save_env_map(map: &EnvironmentMap, base: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(base.with_extension("f32"))?);
    for texel in &map.texels {
        for &v in texel {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    let header = EnvMapHeader {
        height: map.height,
        width: map.width,
        channels: CHANNELS as u32,
        dtype: "f32le".into(),
    };
    let json = serde_json::to_vec_pretty(&header)
        .map_err(|e| Error::Format(format!("envmap header encode: {e}")))?;
    std::fs::write(base.with_extension("json"), json)?;
    Ok(())
}

pub fn load_env_map(base: &Path) -> Result<EnvironmentMap> {
    let json = std::fs::read(base.with_extension("json"))?;
    let header: EnvMapHeader = serde_json::from_slice(&json)
        .map_err(|e| Error::Format(format!("envmap header decode: {e}")))?;
    let bytes = std::fs::read(base.with_extension("f32"))?;
    let n = header.width as usize * header.height as usize;
    if bytes.len() != n * CHANNELS * 4 {
        return Err(Error::Format("envmap payload size mismatch".into()));
    }
    let mut texels = vec![[0.0; CHANNELS]; n];
    for (i, texel) in texels.iter_mut().enumerate() {
        for (c, v) in texel.iter_mut().enumerate() {
            let at = (i * CHANNELS + c) * 4;
            *v = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64;
        }
    }
    EnvironmentMap::from_texels(header.height, texels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn scene_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.pfs");
        let mut scene = synth::generate(synth::SceneKind::RandomBlobs, 16, 42, 4).unwrap();
        // Attach a sampled point set so the points section is exercised.
        let oracle = crate::scene::AppearanceOracle::new(scene.header.oracle_seed);
        let cloud = crate::sampling::sample_view(
            &scene.field,
            &scene.cameras[0],
            &oracle,
            2000,
            7,
            &crate::sampling::SamplingConfig::default(),
        )
        .unwrap();
        scene.points.push(cloud);
        scene.save(&path).unwrap();
        let loaded = Scene::load(&path).unwrap();
        assert_eq!(scene, loaded);
    }

    #[test]
    fn save_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.pfs");
        let b = dir.path().join("b.pfs");
        let scene = synth::generate(synth::SceneKind::Shell, 16, 9, 3).unwrap();
        scene.save(&a).unwrap();
        scene.save(&b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn feature_dump_round_trips_at_f32() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = FeatureImage::new(7, 5);
        for (i, f) in img.features.iter_mut().enumerate() {
            *f = [i as f64 * 0.125, 0.5, -1.0, 2.0];
        }
        for (i, t) in img.transmittance.iter_mut().enumerate() {
            *t = (i as f64 / 35.0).clamp(0.0, 1.0);
        }
        let base = dir.path().join("frame_000");
        save_feature_image(&img, &base).unwrap();
        let back = load_feature_image(&base).unwrap();
        assert_eq!(back.width, 7);
        for (a, b) in img.features.iter().zip(back.features.iter()) {
            for c in 0..4 {
                assert_eq!(a[c] as f32, b[c] as f32);
            }
        }
    }

    #[test]
    fn env_map_round_trips_at_f32() {
        let dir = tempfile::tempdir().unwrap();
        let mut map = EnvironmentMap::new(8, [0.0; 4]).unwrap();
        for (i, t) in map.texels.iter_mut().enumerate() {
            *t = [i as f64, 0.5, 0.25, 1.0];
        }
        let base = dir.path().join("bg");
        save_env_map(&map, &base).unwrap();
        let back = load_env_map(&base).unwrap();
        assert_eq!(back.width, 16);
        for (a, b) in map.texels.iter().zip(back.texels.iter()) {
            for c in 0..4 {
                assert_eq!(a[c] as f32, b[c] as f32);
            }
        }
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pfs");
        std::fs::write(&path, b"PFSCENE1\x01").unwrap();
        assert!(Scene::load(&path).is_err());
    }
}
