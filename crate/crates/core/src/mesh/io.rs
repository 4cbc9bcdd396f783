//! Mesh file io: OBJ text and binary little-endian PLY.
//!
//! Both writers are byte-deterministic: identical meshes produce identical
//! files. OBJ stores positions (with optional RGB extension on `v` lines)
//! and normals; PLY stores positions as f64, optional f64 normals, and
//! optional 8-bit colors.

use super::TriMesh;
use crate::error::{Error, Result};
use crate::sdf::io::read_all;
use crate::Vec3;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Writes an OBJ file. Colors, when present, extend each `v` line with
/// `r g b`; normals are emitted as `vn` lines referenced as `f a//a`.
pub fn write_obj(mesh: &TriMesh, path: &Path) -> Result<()> {
    mesh.validate()?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |s: String| w.write_all(s.as_bytes()).map_err(|e| Error::io(path, e));
    let has_colors = !mesh.colors.is_empty();
    let has_normals = !mesh.normals.is_empty();
    for (i, p) in mesh.positions.iter().enumerate() {
        if has_colors {
            let c = mesh.colors[i];
            put(format!("v {} {} {} {} {} {}\n", p.x, p.y, p.z, c.x, c.y, c.z))?;
        } else {
            put(format!("v {} {} {}\n", p.x, p.y, p.z))?;
        }
    }
    for n in &mesh.normals {
        put(format!("vn {} {} {}\n", n.x, n.y, n.z))?;
    }
    for t in &mesh.triangles {
        let (a, b, c) = (t[0] + 1, t[1] + 1, t[2] + 1);
        if has_normals {
            put(format!("f {a}//{a} {b}//{b} {c}//{c}\n"))?;
        } else {
            put(format!("f {a} {b} {c}\n"))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads an OBJ file with triangular faces and absolute 1-based indices.
/// Unknown directives are skipped.
pub fn read_obj(path: &Path) -> Result<TriMesh> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut positions: Vec<Vec3> = Vec::new();
    let mut colors: Vec<Vec3> = Vec::new();
    let mut raw_normals: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    // normal index per vertex, resolved after reading
    let mut normal_of_vertex: Vec<Option<usize>> = Vec::new();

    let parse_f = |tok: &str, line_no: usize| -> Result<f64> {
        tok.parse::<f64>()
            .map_err(|_| Error::format(path, format!("line {line_no}: bad number '{tok}'")))
    };

    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = line_no + 1;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let rest: Vec<&str> = toks.collect();
                if rest.len() != 3 && rest.len() != 6 {
                    return Err(Error::format(
                        path,
                        format!("line {line_no}: 'v' needs 3 or 6 numbers"),
                    ));
                }
                let mut vals = [0.0; 6];
                for (slot, tok) in vals.iter_mut().zip(&rest) {
                    *slot = parse_f(tok, line_no)?;
                }
                positions.push(Vec3::new(vals[0], vals[1], vals[2]));
                normal_of_vertex.push(None);
                if rest.len() == 6 {
                    colors.push(Vec3::new(vals[3], vals[4], vals[5]));
                } else if !colors.is_empty() {
                    return Err(Error::format(
                        path,
                        format!("line {line_no}: some vertices have colors and some do not"),
                    ));
                }
            }
            Some("vn") => {
                let rest: Vec<&str> = toks.collect();
                if rest.len() != 3 {
                    return Err(Error::format(
                        path,
                        format!("line {line_no}: 'vn' needs 3 numbers"),
                    ));
                }
                raw_normals.push(Vec3::new(
                    parse_f(rest[0], line_no)?,
                    parse_f(rest[1], line_no)?,
                    parse_f(rest[2], line_no)?,
                ));
            }
            Some("f") => {
                let rest: Vec<&str> = toks.collect();
                if rest.len() != 3 {
                    return Err(Error::format(
                        path,
                        format!("line {line_no}: only triangular faces are supported"),
                    ));
                }
                let mut tri = [0u32; 3];
                for (slot, entry) in tri.iter_mut().zip(&rest) {
                    let mut parts = entry.split('/');
                    let v_tok = parts.next().unwrap_or("");
                    let v: i64 = v_tok.parse().map_err(|_| {
                        Error::format(path, format!("line {line_no}: bad face index '{entry}'"))
                    })?;
                    if v < 1 || v as usize > positions.len() {
                        return Err(Error::format(
                            path,
                            format!(
                                "line {line_no}: face index {v} out of range 1..={}",
                                positions.len()
                            ),
                        ));
                    }
                    let vi = (v - 1) as usize;
                    *slot = vi as u32;
                    // texture slot (ignored), then normal slot
                    let _vt = parts.next();
                    if let Some(n_tok) = parts.next() {
                        if !n_tok.is_empty() {
                            let n: i64 = n_tok.parse().map_err(|_| {
                                Error::format(
                                    path,
                                    format!("line {line_no}: bad normal index '{entry}'"),
                                )
                            })?;
                            if n < 1 || n as usize > raw_normals.len() {
                                return Err(Error::format(
                                    path,
                                    format!("line {line_no}: normal index {n} out of range"),
                                ));
                            }
                            normal_of_vertex[vi] = Some((n - 1) as usize);
                        }
                    }
                }
                triangles.push(tri);
            }
            _ => {} // comments, groups, materials, texture coords
        }
    }

    let normals = if normal_of_vertex.iter().any(|n| n.is_some()) {
        normal_of_vertex
            .iter()
            .map(|n| n.map(|i| raw_normals[i]).unwrap_or_else(Vec3::zeros))
            .collect()
    } else {
        Vec::new()
    };
    let mesh = TriMesh {
        positions,
        normals,
        colors,
        triangles,
    };
    mesh.validate()
        .map_err(|e| Error::format(path, format!("invalid mesh: {e}")))?;
    Ok(mesh)
}

/// Writes a binary little-endian PLY file (f64 positions, optional f64
/// normals, optional 8-bit colors).
pub fn write_ply(mesh: &TriMesh, path: &Path) -> Result<()> {
    mesh.validate()?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let has_normals = !mesh.normals.is_empty();
    let has_colors = !mesh.colors.is_empty();

    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", mesh.positions.len()));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if has_normals {
        header.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    if has_colors {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str(&format!("element face {}\n", mesh.triangles.len()));
    header.push_str("property list uchar int vertex_indices\nend_header\n");
    w.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;

    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    for (i, p) in mesh.positions.iter().enumerate() {
        for c in [p.x, p.y, p.z] {
            put(&c.to_le_bytes())?;
        }
        if has_normals {
            let n = mesh.normals[i];
            for c in [n.x, n.y, n.z] {
                put(&c.to_le_bytes())?;
            }
        }
        if has_colors {
            let c = mesh.colors[i];
            for ch in [c.x, c.y, c.z] {
                put(&[(ch.clamp(0.0, 1.0) * 255.0).round() as u8])?;
            }
        }
    }
    for t in &mesh.triangles {
        put(&[3u8])?;
        for &v in t {
            put(&(v as i32).to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a binary little-endian PLY file in the layout [`write_ply`] emits.
pub fn read_ply(path: &Path) -> Result<TriMesh> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    // Header is ASCII lines up to end_header.
    let mut lines: Vec<String> = Vec::new();
    loop {
        let mut line = Vec::new();
        loop {
            let mut byte = [0u8; 1];
            read_all(&mut r, &mut byte, path)?;
            if byte[0] == b'\n' {
                break;
            }
            line.push(byte[0]);
            if line.len() > 256 {
                return Err(Error::format(path, "header line too long"));
            }
        }
        let line = String::from_utf8(line)
            .map_err(|_| Error::format(path, "non-ascii header"))?;
        let done = line == "end_header";
        lines.push(line);
        if done {
            break;
        }
        if lines.len() > 64 {
            return Err(Error::format(path, "header too long"));
        }
    }
    if lines.first().map(String::as_str) != Some("ply") {
        return Err(Error::format(path, "bad magic (expected ply)"));
    }
    if lines.get(1).map(String::as_str) != Some("format binary_little_endian 1.0") {
        return Err(Error::format(path, "unsupported format line"));
    }

    let mut n_vertices: Option<usize> = None;
    let mut n_faces: Option<usize> = None;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut face_props: Vec<String> = Vec::new();
    let mut current: Option<&mut Vec<String>> = None;
    for line in &lines[2..lines.len() - 1] {
        if let Some(rest) = line.strip_prefix("element vertex ") {
            n_vertices = Some(
                rest.parse()
                    .map_err(|_| Error::format(path, "bad vertex count"))?,
            );
            current = Some(&mut vertex_props);
        } else if let Some(rest) = line.strip_prefix("element face ") {
            n_faces = Some(
                rest.parse()
                    .map_err(|_| Error::format(path, "bad face count"))?,
            );
            current = Some(&mut face_props);
        } else if let Some(rest) = line.strip_prefix("property ") {
            match &mut current {
                Some(props) => props.push(rest.to_string()),
                None => return Err(Error::format(path, "property before element")),
            }
        } else if line.starts_with("comment") {
            continue;
        } else {
            return Err(Error::format(path, format!("unsupported header line '{line}'")));
        }
    }
    let n_vertices = n_vertices.ok_or_else(|| Error::format(path, "missing vertex element"))?;
    let n_faces = n_faces.ok_or_else(|| Error::format(path, "missing face element"))?;

    let base = ["double x", "double y", "double z"];
    let normal_props = ["double nx", "double ny", "double nz"];
    let color_props = ["uchar red", "uchar green", "uchar blue"];
    let mut expect: Vec<&str> = base.to_vec();
    let has_normals = vertex_props.iter().any(|p| p == "double nx");
    let has_colors = vertex_props.iter().any(|p| p == "uchar red");
    if has_normals {
        expect.extend(normal_props);
    }
    if has_colors {
        expect.extend(color_props);
    }
    if vertex_props != expect {
        return Err(Error::format(
            path,
            format!("unsupported vertex layout {vertex_props:?}"),
        ));
    }
    if face_props != ["list uchar int vertex_indices"] {
        return Err(Error::format(
            path,
            format!("unsupported face layout {face_props:?}"),
        ));
    }

    let f64_of = |r: &mut BufReader<std::fs::File>| -> Result<f64> {
        let mut b = [0u8; 8];
        read_all(r, &mut b, path)?;
        Ok(f64::from_le_bytes(b))
    };
    let mut positions = Vec::with_capacity(n_vertices);
    let mut normals = Vec::new();
    let mut colors = Vec::new();
    for _ in 0..n_vertices {
        positions.push(Vec3::new(f64_of(&mut r)?, f64_of(&mut r)?, f64_of(&mut r)?));
        if has_normals {
            normals.push(Vec3::new(f64_of(&mut r)?, f64_of(&mut r)?, f64_of(&mut r)?));
        }
        if has_colors {
            let mut b = [0u8; 3];
            read_all(&mut r, &mut b, path)?;
            colors.push(Vec3::new(
                b[0] as f64 / 255.0,
                b[1] as f64 / 255.0,
                b[2] as f64 / 255.0,
            ));
        }
    }
    let mut triangles = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let mut count = [0u8; 1];
        read_all(&mut r, &mut count, path)?;
        if count[0] != 3 {
            return Err(Error::format(
                path,
                format!("face with {} vertices (only triangles supported)", count[0]),
            ));
        }
        let mut tri = [0u32; 3];
        for slot in &mut tri {
            let mut b = [0u8; 4];
            read_all(&mut r, &mut b, path)?;
            let v = i32::from_le_bytes(b);
            if v < 0 || v as usize >= n_vertices {
                return Err(Error::format(path, format!("face index {v} out of range")));
            }
            *slot = v as u32;
        }
        triangles.push(tri);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(path, "trailing bytes after face data"));
    }

    let mesh = TriMesh {
        positions,
        normals,
        colors,
        triangles,
    };
    mesh.validate()
        .map_err(|e| Error::format(path, format!("invalid mesh: {e}")))?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{cube, tetrahedron};
    use super::*;

    fn decorated_cube() -> TriMesh {
        let mut m = cube(0.5);
        m.normals = m.positions.iter().map(|p| p.normalize()).collect();
        m.colors = m
            .positions
            .iter()
            .map(|p| Vec3::new(p.x + 0.5, p.y + 0.5, p.z + 0.5))
            .collect();
        m
    }

    #[test]
    fn obj_roundtrip_is_exact() {
        let m = decorated_cube();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.obj");
        write_obj(&m, &path).unwrap();
        let back = read_obj(&path).unwrap();
        // Text floats use the shortest round-trip form, so values are exact.
        assert_eq!(back.positions, m.positions);
        assert_eq!(back.normals, m.normals);
        assert_eq!(back.colors, m.colors);
        assert_eq!(back.triangles, m.triangles);
    }

    #[test]
    fn ply_roundtrip_is_exact_up_to_color_quantization() {
        let m = decorated_cube();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.ply");
        write_ply(&m, &path).unwrap();
        let back = read_ply(&path).unwrap();
        assert_eq!(back.positions, m.positions, "f64 positions are exact");
        assert_eq!(back.normals, m.normals);
        assert_eq!(back.triangles, m.triangles);
        for (a, b) in back.colors.iter().zip(&m.colors) {
            assert!((a - b).amax() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn bare_meshes_roundtrip_without_attributes() {
        let m = tetrahedron();
        let dir = tempfile::tempdir().unwrap();
        for (name, write, read) in [
            ("t.obj", write_obj as fn(&TriMesh, &Path) -> Result<()>, read_obj as fn(&Path) -> Result<TriMesh>),
            ("t.ply", write_ply, read_ply),
        ] {
            let path = dir.path().join(name);
            write(&m, &path).unwrap();
            let back = read(&path).unwrap();
            assert_eq!(back.positions, m.positions, "{name}");
            assert_eq!(back.triangles, m.triangles, "{name}");
            assert!(back.normals.is_empty() && back.colors.is_empty(), "{name}");
        }
    }

    #[test]
    fn writes_are_byte_deterministic() {
        let m = decorated_cube();
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.obj", "a.ply"] {
            let p1 = dir.path().join(name);
            let p2 = dir.path().join(format!("2{name}"));
            let write = if name.ends_with(".obj") { write_obj } else { write_ply };
            write(&m, &p1).unwrap();
            write(&m, &p2).unwrap();
            assert_eq!(
                std::fs::read(&p1).unwrap(),
                std::fs::read(&p2).unwrap(),
                "{name}"
            );
        }
    }

    #[test]
    fn obj_parses_foreign_files_and_rejects_bad_indices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hand.obj");
        std::fs::write(
            &path,
            "# comment\no thing\nv 0 0 0\nv 1 0 0\nv 0 1 0\ns off\nf 1 2 3\n",
        )
        .unwrap();
        let m = read_obj(&path).unwrap();
        assert_eq!(m.positions.len(), 3);
        assert_eq!(m.triangles, vec![[0, 1, 2]]);

        std::fs::write(&path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n").unwrap();
        assert!(read_obj(&path).is_err(), "out-of-range index accepted");
        std::fs::write(&path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n").unwrap();
        assert!(read_obj(&path).is_err(), "zero index accepted");
        std::fs::write(&path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert!(read_obj(&path).is_err(), "relative index accepted");
        std::fs::write(&path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n").unwrap();
        assert!(read_obj(&path).is_err(), "quad accepted");
    }

    #[test]
    fn ply_rejects_corruption() {
        let m = decorated_cube();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        write_ply(&m, &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad = good.clone();
        bad[0] = b'x';
        std::fs::write(&path, &bad).unwrap();
        assert!(read_ply(&path).is_err(), "bad magic accepted");

        std::fs::write(&path, &good[..good.len() - 2]).unwrap();
        assert!(read_ply(&path).is_err(), "truncation accepted");

        let mut long = good.clone();
        long.push(7);
        std::fs::write(&path, &long).unwrap();
        assert!(read_ply(&path).is_err(), "trailing bytes accepted");
    }
}
