//! Gmsh ASCII MSH 2.2 subset: `$MeshFormat`, `$PhysicalNames`, `$Nodes` and
//! `$Elements`. Only 3-node triangles (element type 2) become mesh cells;
//! points and lines are skipped. The first element tag is the physical group.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mesh, Point, Region};
use crate::error::{Error, Result};

/// Physical-group tags of the three regions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionTags {
    pub omega1: i64,
    pub omega2: i64,
    pub interaction: i64,
}

impl Default for RegionTags {
    fn default() -> Self {
        RegionTags { omega1: 1, omega2: 2, interaction: 3 }
    }
}

impl RegionTags {
    fn region(&self, tag: i64) -> Option<Region> {
        if tag == self.omega1 {
            Some(Region::Omega1)
        } else if tag == self.omega2 {
            Some(Region::Omega2)
        } else if tag == self.interaction {
            Some(Region::Interaction)
        } else {
            None
        }
    }

    fn tag(&self, region: Region) -> i64 {
        match region {
            Region::Omega1 => self.omega1,
            Region::Omega2 => self.omega2,
            Region::Interaction => self.interaction,
        }
    }
}

pub fn read_gmsh(path: &Path, tags: &RegionTags) -> Result<Mesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, tags).map_err(|msg| match msg {
        ParseError::Format(msg) => Error::MeshFormat { path: path.to_path_buf(), msg },
        ParseError::Mesh(e) => e,
    })
}

enum ParseError {
    Format(String),
    Mesh(Error),
}

fn fmt_err(line: usize, msg: impl std::fmt::Display) -> ParseError {
    ParseError::Format(format!("line {line}: {msg}"))
}

fn parse(text: &str, tags: &RegionTags) -> std::result::Result<Mesh, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let mut nodes: HashMap<i64, Point> = HashMap::new();
    let mut elements: Vec<([i64; 3], i64, usize)> = Vec::new();
    let mut saw_format = false;
    while let Some((ln, line)) = lines.next() {
        match line {
            "$MeshFormat" => {
                let (ln, header) = lines.next().ok_or_else(|| fmt_err(ln, "truncated $MeshFormat"))?;
                let mut it = header.split_whitespace();
                let version = it.next().unwrap_or("");
                let file_type = it.next().unwrap_or("");
                if !version.starts_with("2.2") {
                    return Err(fmt_err(ln, format!("unsupported MSH version {version} (need 2.2)")));
                }
                if file_type != "0" {
                    return Err(fmt_err(ln, "binary MSH files are not supported"));
                }
                expect_end(&mut lines, "$EndMeshFormat")?;
                saw_format = true;
            }
            "$Nodes" => {
                let count = read_count(&mut lines, ln)?;
                for _ in 0..count {
                    let (ln, l) = lines.next().ok_or_else(|| fmt_err(ln, "truncated $Nodes"))?;
                    let f: Vec<&str> = l.split_whitespace().collect();
                    if f.len() < 3 {
                        return Err(fmt_err(ln, "node line needs id x y [z]"));
                    }
                    let id = parse_num::<i64>(f[0], ln)?;
                    let x = parse_num::<f64>(f[1], ln)?;
                    let y = parse_num::<f64>(f[2], ln)?;
                    if nodes.insert(id, Point::new(x, y)).is_some() {
                        return Err(fmt_err(ln, format!("duplicate node id {id}")));
                    }
                }
                expect_end(&mut lines, "$EndNodes")?;
            }
            "$Elements" => {
                let count = read_count(&mut lines, ln)?;
                for _ in 0..count {
                    let (ln, l) = lines.next().ok_or_else(|| fmt_err(ln, "truncated $Elements"))?;
                    let f: Vec<i64> =
                        l.split_whitespace().map(|s| parse_num::<i64>(s, ln)).collect::<std::result::Result<_, _>>()?;
                    if f.len() < 3 {
                        return Err(fmt_err(ln, "element line too short"));
                    }
                    let (etype, ntags) = (f[1], f[2] as usize);
                    if etype != 2 {
                        continue;
                    }
                    if f.len() != 3 + ntags + 3 || ntags == 0 {
                        return Err(fmt_err(ln, "triangle needs at least one tag and three nodes"));
                    }
                    let n = &f[3 + ntags..];
                    elements.push(([n[0], n[1], n[2]], f[3], ln));
                }
                expect_end(&mut lines, "$EndElements")?;
            }
            l if l.starts_with('$') && !l.starts_with("$End") => {
                // $PhysicalNames and any other section: skip to its end marker.
                let end = format!("$End{}", &l[1..]);
                loop {
                    match lines.next() {
                        Some((_, x)) if x == end => break,
                        Some(_) => {}
                        None => return Err(fmt_err(ln, format!("missing {end}"))),
                    }
                }
            }
            other => return Err(fmt_err(ln, format!("unexpected content '{other}'"))),
        }
    }
    if !saw_format {
        return Err(ParseError::Format("missing $MeshFormat section".into()));
    }
    if elements.is_empty() {
        return Err(ParseError::Format("no triangles (element type 2)".into()));
    }
    // Keep only nodes referenced by triangles, in first-use order.
    let mut index: HashMap<i64, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(elements.len());
    let mut regions = Vec::with_capacity(elements.len());
    for (ids, tag, ln) in elements {
        let region = tags.region(tag).ok_or_else(|| fmt_err(ln, format!("unknown region tag {tag}")))?;
        let mut tri = [0usize; 3];
        for (k, id) in ids.iter().enumerate() {
            let next = vertices.len();
            tri[k] = *index.entry(*id).or_insert(next);
            if tri[k] == next {
                let p = nodes.get(id).ok_or_else(|| fmt_err(ln, format!("unknown node id {id}")))?;
                vertices.push(*p);
            }
        }
        triangles.push(tri);
        regions.push(region);
    }
    Mesh::new(vertices, triangles, regions).map_err(ParseError::Mesh)
}

fn parse_num<T: std::str::FromStr>(s: &str, ln: usize) -> std::result::Result<T, ParseError> {
    s.parse::<T>().map_err(|_| fmt_err(ln, format!("cannot parse '{s}'")))
}

fn read_count<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    ln: usize,
) -> std::result::Result<usize, ParseError> {
    let (ln, l) = lines.next().ok_or_else(|| fmt_err(ln, "missing count"))?;
    parse_num::<usize>(l, ln)
}

fn expect_end<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    marker: &str,
) -> std::result::Result<(), ParseError> {
    match lines.next() {
        Some((_, l)) if l == marker => Ok(()),
        Some((ln, l)) => Err(fmt_err(ln, format!("expected {marker}, found '{l}'"))),
        None => Err(ParseError::Format(format!("missing {marker}"))),
    }
}

/// Write a mesh as MSH 2.2 ASCII with one physical tag per triangle.
pub fn write_gmsh(mesh: &Mesh, path: &Path, tags: &RegionTags) -> Result<()> {
    let mut out = String::new();
    out.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
    let _ = write!(
        out,
        "$PhysicalNames\n3\n2 {} \"Omega1\"\n2 {} \"Omega2\"\n2 {} \"Interaction\"\n$EndPhysicalNames\n",
        tags.omega1, tags.omega2, tags.interaction
    );
    let _ = writeln!(out, "$Nodes\n{}", mesh.num_vertices());
    for (i, p) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(out, "{} {:.17e} {:.17e} 0", i + 1, p.x, p.y);
    }
    out.push_str("$EndNodes\n");
    let _ = writeln!(out, "$Elements\n{}", mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let tag = tags.tag(mesh.region(t));
        let _ = writeln!(out, "{} 2 2 {} {} {} {} {}", t + 1, tag, tag, tri[0] + 1, tri[1] + 1, tri[2] + 1);
    }
    out.push_str("$EndElements\n");
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
