//! Mesh file formats.
//!
//! Native format (text, 0-based ids, `#` comments allowed):
//!
//! ```text
//! finpinn-mesh v1 dim=2
//! nodes 4
//! 0 0 0
//! 1 1 0
//! 2 1 1
//! 3 0 1
//! elements 2
//! 0 tri3 0 1 2
//! 1 tri3 0 2 3
//! facets 2
//! bottom 0 1
//! top 2 3
//! ```
//!
//! The `facets` section is optional and tags boundary facets by their node
//! ids (one node in 1D, two in 2D). Saving is canonical: node ids are
//! sequential, floats use the shortest round-trip form, so `save(load(f))`
//! reproduces a canonically saved file byte for byte.
//!
//! Gmsh MSH 2.2 ASCII is read for 2D meshes: element type 2 (3-node
//! triangle) forms the mesh, type 1 (2-node line) tags boundary facets with
//! the physical name (or the physical id as a string when no `$PhysicalNames`
//! section is present). Any other element type is an error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{Element, ElementKind, Mesh};

pub const NATIVE_MAGIC: &str = "finpinn-mesh v1";

/// Load a mesh, sniffing the format from the first line.
pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text)
}

pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let first = text.lines().next().unwrap_or("");
    if first.starts_with(NATIVE_MAGIC) {
        parse_native(text)
    } else if first.trim() == "$MeshFormat" {
        parse_gmsh(text)
    } else {
        Err(Error::parse(1, "unrecognized mesh format"))
    }
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            iter: text.lines().enumerate(),
        }
    }

    /// Next non-empty, non-comment line with its 1-based number.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, raw) in self.iter.by_ref() {
            let line = raw.trim();
            if !line.is_empty() && !line.starts_with('#') {
                return Some((i + 1, line));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next()
            .ok_or_else(|| Error::parse(0, format!("unexpected end of file, expected {what}")))
    }
}

pub fn parse_native(text: &str) -> Result<Mesh> {
    let mut lines = Lines::new(text);
    let (ln, header) = lines.expect("header")?;
    let rest = header
        .strip_prefix(NATIVE_MAGIC)
        .ok_or_else(|| Error::parse(ln, format!("expected `{NATIVE_MAGIC} dim=<1|2>` header")))?;
    let dim: usize = rest
        .trim()
        .strip_prefix("dim=")
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| Error::parse(ln, "header must end with dim=<1|2>"))?;

    let (ln, decl) = lines.expect("`nodes <count>`")?;
    let n_nodes = section_count(decl, "nodes", ln)?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for want in 0..n_nodes {
        let (ln, line) = lines.expect("node line")?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 1 + dim {
            return Err(Error::parse(
                ln,
                format!("node line needs `<id> <x>{}`", if dim == 2 { " <y>" } else { "" }),
            ));
        }
        let id: usize = f[0]
            .parse()
            .map_err(|_| Error::parse(ln, format!("bad node id `{}`", f[0])))?;
        if id != want {
            return Err(Error::parse(
                ln,
                format!("node ids must be sequential; expected {want}, found {id}"),
            ));
        }
        let x = parse_f64(f[1], ln)?;
        let y = if dim == 2 { parse_f64(f[2], ln)? } else { 0.0 };
        nodes.push([x, y]);
    }

    let (ln, decl) = lines.expect("`elements <count>`")?;
    let n_elems = section_count(decl, "elements", ln)?;
    let mut elements = Vec::with_capacity(n_elems);
    for want in 0..n_elems {
        let (ln, line) = lines.expect("element line")?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 2 {
            return Err(Error::parse(ln, "element line needs `<id> <type> <nodes...>`"));
        }
        let id: usize = f[0]
            .parse()
            .map_err(|_| Error::parse(ln, format!("bad element id `{}`", f[0])))?;
        if id != want {
            return Err(Error::parse(
                ln,
                format!("element ids must be sequential; expected {want}, found {id}"),
            ));
        }
        let kind = match f[1] {
            "line2" => ElementKind::Line2,
            "tri3" => ElementKind::Tri3,
            other => return Err(Error::parse(ln, format!("unknown element type `{other}`"))),
        };
        if f.len() != 2 + kind.n_nodes() {
            return Err(Error::parse(
                ln,
                format!("{} element needs {} node ids", kind.name(), kind.n_nodes()),
            ));
        }
        let mut conn = [0usize; 3];
        for (slot, tok) in conn.iter_mut().zip(&f[2..]) {
            *slot = tok
                .parse()
                .map_err(|_| Error::parse(ln, format!("bad node id `{tok}`")))?;
        }
        elements.push(Element { kind, nodes: conn });
    }

    let mut tagged = Vec::new();
    if let Some((ln, decl)) = lines.next() {
        let n_facets = section_count(decl, "facets", ln)?;
        for _ in 0..n_facets {
            let (ln, line) = lines.expect("facet line")?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() < 2 || f.len() > 3 {
                return Err(Error::parse(ln, "facet line needs `<tag> <n1> [<n2>]`"));
            }
            let conn: Vec<usize> = f[1..]
                .iter()
                .map(|tok| {
                    tok.parse()
                        .map_err(|_| Error::parse(ln, format!("bad node id `{tok}`")))
                })
                .collect::<Result<_>>()?;
            tagged.push((conn, f[0].to_string()));
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::parse(ln, "trailing content after facets section"));
        }
    }

    Mesh::build(dim, nodes, elements, tagged)
}

fn section_count(line: &str, name: &str, ln: usize) -> Result<usize> {
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(word), Some(count), None) if word == name => count
            .parse()
            .map_err(|_| Error::parse(ln, format!("bad {name} count `{count}`"))),
        _ => Err(Error::parse(ln, format!("expected `{name} <count>`"))),
    }
}

fn parse_f64(tok: &str, ln: usize) -> Result<f64> {
    tok.parse()
        .map_err(|_| Error::parse(ln, format!("bad number `{tok}`")))
}

/// Canonical native-format serialization.
pub fn save_native(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{NATIVE_MAGIC} dim={}", mesh.dim);
    let _ = writeln!(out, "nodes {}", mesh.nodes.len());
    for (i, x) in mesh.nodes.iter().enumerate() {
        if mesh.dim == 1 {
            let _ = writeln!(out, "{i} {}", x[0]);
        } else {
            let _ = writeln!(out, "{i} {} {}", x[0], x[1]);
        }
    }
    let _ = writeln!(out, "elements {}", mesh.elements.len());
    for (i, el) in mesh.elements.iter().enumerate() {
        let ids = el.node_ids();
        let conn = ids
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(out, "{i} {} {conn}", el.kind.name());
    }
    let _ = writeln!(out, "facets {}", mesh.facets.len());
    for f in &mesh.facets {
        if mesh.dim == 1 {
            let _ = writeln!(out, "{} {}", f.tag, f.nodes[0]);
        } else {
            let _ = writeln!(out, "{} {} {}", f.tag, f.nodes[0], f.nodes[1]);
        }
    }
    out
}

pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    std::fs::write(path, save_native(mesh))?;
    Ok(())
}

pub fn parse_gmsh(text: &str) -> Result<Mesh> {
    let mut lines = Lines::new(text);
    let (ln, tag) = lines.expect("$MeshFormat")?;
    if tag != "$MeshFormat" {
        return Err(Error::parse(ln, "expected $MeshFormat"));
    }
    let (ln, ver) = lines.expect("format line")?;
    let version = ver.split_whitespace().next().unwrap_or("");
    if !version.starts_with("2.2") {
        return Err(Error::parse(
            ln,
            format!("unsupported MSH version `{version}`; only 2.2 ASCII is handled"),
        ));
    }
    expect_tag(&mut lines, "$EndMeshFormat")?;

    let mut physical_names: BTreeMap<i64, String> = BTreeMap::new();
    let mut id_map: BTreeMap<i64, usize> = BTreeMap::new();
    let mut nodes: Vec<[f64; 2]> = Vec::new();
    let mut elements: Vec<Element> = Vec::new();
    let mut tagged: Vec<(Vec<usize>, String)> = Vec::new();

    while let Some((ln, section)) = lines.next() {
        match section {
            "$PhysicalNames" => {
                let (ln, count) = lines.expect("physical name count")?;
                let n: usize = count
                    .parse()
                    .map_err(|_| Error::parse(ln, "bad physical name count"))?;
                for _ in 0..n {
                    let (ln, line) = lines.expect("physical name")?;
                    // <dim> <id> "<name>"
                    let f: Vec<&str> = line.splitn(3, ' ').collect();
                    if f.len() != 3 {
                        return Err(Error::parse(ln, "physical name needs `<dim> <id> \"name\"`"));
                    }
                    let id: i64 = f[1]
                        .parse()
                        .map_err(|_| Error::parse(ln, "bad physical id"))?;
                    physical_names.insert(id, f[2].trim_matches('"').to_string());
                }
                expect_tag(&mut lines, "$EndPhysicalNames")?;
            }
            "$Nodes" => {
                let (ln, count) = lines.expect("node count")?;
                let n: usize = count.parse().map_err(|_| Error::parse(ln, "bad node count"))?;
                for _ in 0..n {
                    let (ln, line) = lines.expect("node")?;
                    let f: Vec<&str> = line.split_whitespace().collect();
                    if f.len() != 4 {
                        return Err(Error::parse(ln, "node line needs `<id> <x> <y> <z>`"));
                    }
                    let id: i64 = f[0].parse().map_err(|_| Error::parse(ln, "bad node id"))?;
                    let x = parse_f64(f[1], ln)?;
                    let y = parse_f64(f[2], ln)?;
                    let z = parse_f64(f[3], ln)?;
                    if z.abs() > 1e-12 {
                        return Err(Error::parse(ln, "only planar meshes (z = 0) are supported"));
                    }
                    id_map.insert(id, nodes.len());
                    nodes.push([x, y]);
                }
                expect_tag(&mut lines, "$EndNodes")?;
            }
            "$Elements" => {
                let (ln, count) = lines.expect("element count")?;
                let n: usize = count
                    .parse()
                    .map_err(|_| Error::parse(ln, "bad element count"))?;
                for _ in 0..n {
                    let (ln, line) = lines.expect("element")?;
                    let f: Vec<i64> = line
                        .split_whitespace()
                        .map(|t| t.parse::<i64>().map_err(|_| Error::parse(ln, "bad integer")))
                        .collect::<Result<_>>()?;
                    if f.len() < 3 {
                        return Err(Error::parse(ln, "element line too short"));
                    }
                    let (etype, ntags) = (f[1], f[2] as usize);
                    let body = &f[3..];
                    if body.len() < ntags {
                        return Err(Error::parse(ln, "element line shorter than its tag count"));
                    }
                    let (tags, conn) = body.split_at(ntags);
                    let resolve = |gid: i64| -> Result<usize> {
                        id_map
                            .get(&gid)
                            .copied()
                            .ok_or_else(|| Error::parse(ln, format!("unknown node id {gid}")))
                    };
                    match etype {
                        1 => {
                            if conn.len() != 2 {
                                return Err(Error::parse(ln, "type-1 element needs 2 nodes"));
                            }
                            let physical = tags.first().copied().unwrap_or(0);
                            let name = physical_names
                                .get(&physical)
                                .cloned()
                                .unwrap_or_else(|| physical.to_string());
                            tagged.push((vec![resolve(conn[0])?, resolve(conn[1])?], name));
                        }
                        2 => {
                            if conn.len() != 3 {
                                return Err(Error::parse(ln, "type-2 element needs 3 nodes"));
                            }
                            elements.push(Element {
                                kind: ElementKind::Tri3,
                                nodes: [resolve(conn[0])?, resolve(conn[1])?, resolve(conn[2])?],
                            });
                        }
                        other => {
                            return Err(Error::parse(
                                ln,
                                format!(
                                    "unsupported element type {other}; only 2-node lines (1) and \
                                     3-node triangles (2) are handled"
                                ),
                            ))
                        }
                    }
                }
                expect_tag(&mut lines, "$EndElements")?;
            }
            _ if section.starts_with('$') && !section.starts_with("$End") => {
                // Skip unknown sections ($Comments etc.).
                let end = format!("$End{}", &section[1..]);
                loop {
                    let (_, line) = lines.expect(&end)?;
                    if line == end {
                        break;
                    }
                }
            }
            _ => return Err(Error::parse(ln, format!("unexpected line `{section}`"))),
        }
    }
    if elements.is_empty() {
        return Err(Error::Mesh("gmsh file contains no triangles".into()));
    }
    Mesh::build(2, nodes, elements, tagged)
}

fn expect_tag(lines: &mut Lines, tag: &str) -> Result<()> {
    let (ln, line) = lines.expect(tag)?;
    if line == tag {
        Ok(())
    } else {
        Err(Error::parse(ln, format!("expected {tag}, found `{line}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: &str = "finpinn-mesh v1 dim=2
nodes 4
0 0 0
1 1 0
2 1 1
3 0 1
elements 2
0 tri3 0 1 2
1 tri3 0 2 3
facets 4
bottom 0 1
right 1 2
top 2 3
left 3 0
";

    #[test]
    fn native_round_trip_is_byte_exact() {
        let mesh = parse_native(SQUARE).unwrap();
        let saved = save_native(&mesh);
        let again = parse_native(&saved).unwrap();
        assert_eq!(save_native(&again), saved);
        assert_eq!(mesh.tags(), vec!["bottom", "left", "right", "top"]);
    }

    #[test]
    fn saved_canonical_file_reloads_identically() {
        let mesh = parse_native(SQUARE).unwrap();
        let canonical = save_native(&mesh);
        // A canonically saved file survives load → save unchanged.
        assert_eq!(save_native(&parse_native(&canonical).unwrap()), canonical);
    }

    #[test]
    fn native_1d() {
        let text = "finpinn-mesh v1 dim=1
nodes 3
0 0
1 0.5
2 1
elements 2
0 line2 0 1
1 line2 1 2
facets 2
left 0
right 2
";
        let mesh = parse_native(text).unwrap();
        assert_eq!(mesh.dim, 1);
        assert_eq!(mesh.facets.len(), 2);
        assert_eq!(save_native(&mesh), text);
    }

    #[test]
    fn native_rejects_bad_input() {
        assert!(parse_native("finpinn-mesh v1 dim=3\nnodes 0\n").is_err());
        assert!(parse_native("bogus\n").is_err());
        // Non-sequential ids.
        let text = "finpinn-mesh v1 dim=1\nnodes 2\n0 0\n5 1\nelements 1\n0 line2 0 1\n";
        assert!(parse_native(text).is_err());
        // Tagging a non-boundary facet.
        let text = SQUARE.replace("bottom 0 1", "bottom 0 2");
        assert!(parse_native(&text).is_err());
    }

    const GMSH: &str = "$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
2
1 11 \"bottom\"
1 12 \"top\"
$EndPhysicalNames
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
4
1 2 2 21 1 1 2 3
2 2 2 21 1 1 3 4
3 1 2 11 2 1 2
4 1 2 12 3 3 4
$EndElements
";

    #[test]
    fn gmsh_parse() {
        let mesh = parse_gmsh(GMSH).unwrap();
        assert_eq!(mesh.n_nodes(), 4);
        assert_eq!(mesh.elements.len(), 2);
        assert_eq!(mesh.facets.len(), 4);
        let tags = mesh.tags();
        assert!(tags.contains(&"bottom".to_string()));
        assert!(tags.contains(&"top".to_string()));
        assert!(tags.contains(&crate::mesh::UNTAGGED.to_string()));
    }

    #[test]
    fn gmsh_rewinds_clockwise_triangles() {
        let flipped = GMSH.replace("1 2 2 21 1 1 2 3", "1 2 2 21 1 1 3 2");
        let mesh = parse_gmsh(&flipped).unwrap();
        assert_eq!(mesh.rewound, 1);
        assert!((mesh.total_measure() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gmsh_rejects_unsupported_type() {
        // Element type 3 (4-node quad).
        let quad = GMSH.replace("1 2 2 21 1 1 2 3", "1 3 2 21 1 1 2 3 4");
        let err = parse_gmsh(&quad).unwrap_err();
        assert!(err.to_string().contains("unsupported element type 3"));
    }

    #[test]
    fn format_sniffing() {
        assert!(parse_mesh(SQUARE).is_ok());
        assert!(parse_mesh(GMSH).is_ok());
        assert!(parse_mesh("hello\n").is_err());
    }
}
