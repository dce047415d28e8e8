//! Kinematic-tree robot descriptions.
//!
//! A robot is a list of links in topological order. Each link carries the
//! joint that connects it to its parent, the fixed transform from the parent
//! joint frame to this joint frame, and the link's inertial data. Non-fixed
//! joints are numbered in link order to form the generalized coordinates.
//!
//! Text format, one record per line (`#` starts a comment):
//!
//! ```text
//! robot <name> dof <n>
//! gravity <x y z>                       # optional, default 0 0 -9.81
//! link <idx> parent <p> joint <revolute|prismatic|fixed> axis <x y z> \
//!      origin <x y z rpy r p y> mass <m> com <x y z> inertia <Ixx Iyy Izz Ixy Ixz Iyz>
//! ```
//!
//! The root link uses `parent -1`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DVector, Matrix3, Rotation3, SymmetricEigen, Unit, Vector3};
use rand::Rng;

use crate::error::{Error, ParseError};

pub const DEFAULT_GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

impl JointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            JointKind::Revolute => "revolute",
            JointKind::Prismatic => "prismatic",
            JointKind::Fixed => "fixed",
        }
    }
}

/// Rigid transform. `rotation` maps child-frame coordinates to parent-frame
/// coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FramePlacement {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl FramePlacement {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Self {
            rotation: rpy_to_matrix(rpy),
            translation: Vector3::from(xyz),
        }
    }

    pub fn compose(&self, other: &FramePlacement) -> FramePlacement {
        FramePlacement {
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.translation + self.rotation * p
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }
}

/// Roll-pitch-yaw about fixed x, y, z axes: `R = Rz(y)·Ry(p)·Rx(r)`.
pub fn rpy_to_matrix(rpy: [f64; 3]) -> Matrix3<f64> {
    Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]).into_inner()
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointDef {
    pub kind: JointKind,
    /// Unit axis in this joint's frame (ignored for fixed joints).
    pub axis: Vector3<f64>,
    /// `None` for the root.
    pub parent: Option<usize>,
    pub origin_xyz: [f64; 3],
    pub origin_rpy: [f64; 3],
    pub origin: FramePlacement,
}

impl JointDef {
    pub fn new(
        kind: JointKind,
        axis: Vector3<f64>,
        parent: Option<usize>,
        origin_xyz: [f64; 3],
        origin_rpy: [f64; 3],
    ) -> Self {
        Self {
            kind,
            axis,
            parent,
            origin_xyz,
            origin_rpy,
            origin: FramePlacement::from_xyz_rpy(origin_xyz, origin_rpy),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkInertia {
    pub mass: f64,
    /// Centre of mass in the link frame.
    pub com: Vector3<f64>,
    /// Rotational inertia about the com, link frame.
    pub inertia: Matrix3<f64>,
}

impl LinkInertia {
    pub fn new(mass: f64, com: Vector3<f64>, diag: [f64; 3], off: [f64; 3]) -> Self {
        let [ixx, iyy, izz] = diag;
        let [ixy, ixz, iyz] = off;
        Self {
            mass,
            com,
            inertia: Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz),
        }
    }

    /// Solid box of the given side lengths, com at `com`.
    pub fn cuboid(mass: f64, com: Vector3<f64>, size: [f64; 3]) -> Self {
        let [a, b, c] = size;
        let k = mass / 12.0;
        Self::new(mass, com, [k * (b * b + c * c), k * (a * a + c * c), k * (a * a + b * b)], [0.0; 3])
    }

    pub fn point_mass(mass: f64, com: Vector3<f64>) -> Self {
        Self::new(mass, com, [0.0; 3], [0.0; 3])
    }

    fn validate(&self, link: usize) -> Result<(), Error> {
        let bad = |reason: String| Error::InvalidInertia { link, reason };
        if !(self.mass.is_finite() && self.mass >= 0.0) {
            return Err(bad(format!("mass {} must be finite and non-negative", self.mass)));
        }
        if self.com.iter().chain(self.inertia.iter()).any(|x| !x.is_finite()) {
            return Err(bad("non-finite com or inertia".into()));
        }
        let asym = (self.inertia - self.inertia.transpose()).amax();
        if asym > 1e-12 {
            return Err(bad(format!("inertia asymmetric by {asym:e}")));
        }
        let scale = self.inertia.amax().max(1.0);
        let eig = SymmetricEigen::new(self.inertia).eigenvalues;
        if eig.iter().any(|&e| e < -1e-12 * scale) {
            return Err(bad(format!("inertia not positive semidefinite (eigenvalues {eig:?})")));
        }
        let (a, b, c) = (eig[0], eig[1], eig[2]);
        let tol = 1e-9 * scale;
        if a + b < c - tol || a + c < b - tol || b + c < a - tol {
            return Err(bad("principal moments violate the triangle inequality".into()));
        }
        Ok(())
    }
}

/// Generalized coordinates and velocities.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

impl RobotState {
    pub fn new(q: DVector<f64>, qd: DVector<f64>) -> Self {
        Self { q, qd }
    }

    pub fn rest(n: usize) -> Self {
        Self::new(DVector::zeros(n), DVector::zeros(n))
    }

    pub fn check(&self, n: usize) -> Result<(), Error> {
        check_len("q", &self.q, n)?;
        check_len("qd", &self.qd, n)?;
        check_finite("state", self.q.iter().chain(self.qd.iter()))
    }
}

pub(crate) fn check_len(what: &'static str, v: &DVector<f64>, n: usize) -> Result<(), Error> {
    if v.len() != n {
        return Err(Error::Dimension { what, expected: n, got: v.len() });
    }
    Ok(())
}

pub(crate) fn check_finite<'a>(what: &'static str, mut it: impl Iterator<Item = &'a f64>) -> Result<(), Error> {
    if it.any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub gravity: Vector3<f64>,
    joints: Vec<JointDef>,
    links: Vec<LinkInertia>,
    dof_of_link: Vec<Option<usize>>,
    link_of_dof: Vec<usize>,
    /// Nearest ancestor (inclusive) that carries a dof, per link.
    dof_ancestor: Vec<Option<usize>>,
}

impl RobotModel {
    pub fn new(
        name: impl Into<String>,
        joints: Vec<JointDef>,
        links: Vec<LinkInertia>,
        gravity: Vector3<f64>,
    ) -> Result<Self, Error> {
        if joints.is_empty() || joints.len() != links.len() {
            return Err(Error::InvalidModel(format!(
                "{} joints but {} links",
                joints.len(),
                links.len()
            )));
        }
        let mut roots = 0;
        for (i, j) in joints.iter().enumerate() {
            match j.parent {
                None => roots += 1,
                Some(p) if p == i => return Err(Error::InvalidModel(format!("cycle: link {i} is its own parent"))),
                Some(p) if p > i => {
                    return Err(Error::InvalidModel(format!(
                        "non-topological order: link {i} has parent {p}"
                    )))
                }
                Some(_) => {}
            }
            if j.kind != JointKind::Fixed {
                let norm = j.axis.norm();
                if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidModel(format!("link {i}: joint axis norm {norm} is not 1")));
                }
            }
            if j.origin_xyz.iter().chain(j.origin_rpy.iter()).any(|x| !x.is_finite()) {
                return Err(Error::InvalidModel(format!("link {i}: non-finite origin")));
            }
        }
        if roots != 1 {
            return Err(Error::InvalidModel(format!("expected exactly one root, found {roots}")));
        }
        for (i, l) in links.iter().enumerate() {
            l.validate(i)?;
        }
        if !gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::InvalidModel("non-finite gravity".into()));
        }

        let mut dof_of_link = Vec::with_capacity(joints.len());
        let mut link_of_dof = Vec::new();
        let mut dof_ancestor = Vec::with_capacity(joints.len());
        for (i, j) in joints.iter().enumerate() {
            if j.kind == JointKind::Fixed {
                dof_of_link.push(None);
                dof_ancestor.push(j.parent.and_then(|p| dof_ancestor[p]));
            } else {
                dof_of_link.push(Some(link_of_dof.len()));
                dof_ancestor.push(Some(i));
                link_of_dof.push(i);
            }
        }
        if link_of_dof.is_empty() {
            return Err(Error::InvalidModel("model has no degrees of freedom".into()));
        }
        Ok(Self {
            name: name.into(),
            gravity,
            joints,
            links,
            dof_of_link,
            link_of_dof,
            dof_ancestor,
        })
    }

    pub fn dof(&self) -> usize {
        self.link_of_dof.len()
    }

    pub fn link_count(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[JointDef] {
        &self.joints
    }

    pub fn links(&self) -> &[LinkInertia] {
        &self.links
    }

    pub fn joint(&self, link: usize) -> &JointDef {
        &self.joints[link]
    }

    pub fn dof_of_link(&self, link: usize) -> Option<usize> {
        self.dof_of_link[link]
    }

    pub fn link_of_dof(&self, dof: usize) -> usize {
        self.link_of_dof[dof]
    }

    pub fn check_link(&self, link: usize) -> Result<(), Error> {
        if link >= self.link_count() {
            return Err(Error::InvalidLink { link, count: self.link_count() });
        }
        Ok(())
    }

    /// Links whose joints move `link`, from `link` towards the root, that
    /// carry a dof.
    pub fn supporting_links(&self, link: usize) -> SupportIter<'_> {
        SupportIter {
            model: self,
            next: self.dof_ancestor[link],
        }
    }

    /// Dofs whose joints are ancestors of (or equal to) `link`.
    pub fn supporting_dofs(&self, link: usize) -> Vec<usize> {
        self.supporting_links(link)
            .map(|l| self.dof_of_link[l].expect("supporting link carries a dof"))
            .collect()
    }

    pub fn with_gravity(mut self, gravity: Vector3<f64>) -> Self {
        self.gravity = gravity;
        self
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        parse_robot(&text)
    }

    /// Canonical text form, parseable by [`parse_robot`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "robot {} dof {}", self.name, self.dof());
        let g = self.gravity;
        let _ = writeln!(out, "gravity {} {} {}", g.x, g.y, g.z);
        for (i, (j, l)) in self.joints.iter().zip(&self.links).enumerate() {
            let parent = j.parent.map_or(-1, |p| p as i64);
            let [x, y, z] = j.origin_xyz;
            let [r, p, yaw] = j.origin_rpy;
            let it = &l.inertia;
            let _ = writeln!(
                out,
                "link {i} parent {parent} joint {} axis {} {} {} origin {x} {y} {z} rpy {r} {p} {yaw} \
                 mass {} com {} {} {} inertia {} {} {} {} {} {}",
                j.kind.as_str(),
                j.axis.x,
                j.axis.y,
                j.axis.z,
                l.mass,
                l.com.x,
                l.com.y,
                l.com.z,
                it[(0, 0)],
                it[(1, 1)],
                it[(2, 2)],
                it[(0, 1)],
                it[(0, 2)],
                it[(1, 2)],
            );
        }
        out
    }
}

pub struct SupportIter<'a> {
    model: &'a RobotModel,
    next: Option<usize>,
}

impl Iterator for SupportIter<'_> {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        let cur = self.next?;
        self.next = self.model.joints[cur].parent.and_then(|p| self.model.dof_ancestor[p]);
        Some(cur)
    }
}

struct Tokens<'a> {
    line: usize,
    it: std::iter::Peekable<std::str::SplitWhitespace<'a>>,
}

impl<'a> Tokens<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse(ParseError { line: self.line, message: msg.into() })
    }

    fn word(&mut self, field: &str) -> Result<&'a str, Error> {
        self.it.next().ok_or_else(|| self.err(format!("missing value for `{field}`")))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), Error> {
        match self.it.next() {
            Some(w) if w == kw => Ok(()),
            Some(w) => Err(self.err(format!("expected `{kw}`, found `{w}`"))),
            None => Err(self.err(format!("expected `{kw}`"))),
        }
    }

    fn num(&mut self, field: &str) -> Result<f64, Error> {
        let w = self.word(field)?;
        let v: f64 = w.parse().map_err(|_| self.err(format!("field `{field}`: invalid number `{w}`")))?;
        if !v.is_finite() {
            return Err(self.err(format!("field `{field}`: non-finite value")));
        }
        Ok(v)
    }

    fn int(&mut self, field: &str) -> Result<i64, Error> {
        let w = self.word(field)?;
        w.parse().map_err(|_| self.err(format!("field `{field}`: invalid integer `{w}`")))
    }

    fn vec3(&mut self, field: &str) -> Result<[f64; 3], Error> {
        Ok([self.num(field)?, self.num(field)?, self.num(field)?])
    }

    fn finish(&mut self) -> Result<(), Error> {
        match self.it.next() {
            Some(w) => Err(self.err(format!("unexpected trailing token `{w}`"))),
            None => Ok(()),
        }
    }
}

struct LinkRecord {
    line: usize,
    parent: i64,
    joint: JointDef,
    inertia: LinkInertia,
}

/// Parse the line-oriented robot description.
pub fn parse_robot(text: &str) -> Result<RobotModel, Error> {
    let mut header: Option<(String, usize)> = None;
    let mut gravity = Vector3::from(DEFAULT_GRAVITY);
    let mut records: BTreeMap<usize, LinkRecord> = BTreeMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut t = Tokens { line, it: content.split_whitespace().peekable() };
        match t.word("record")? {
            "robot" => {
                if header.is_some() {
                    return Err(t.err("duplicate `robot` header"));
                }
                let name = t.word("robot")?.to_string();
                t.keyword("dof")?;
                let n = t.int("dof")?;
                if n <= 0 {
                    return Err(t.err("dof must be positive"));
                }
                t.finish()?;
                header = Some((name, n as usize));
            }
            "gravity" => {
                gravity = Vector3::from(t.vec3("gravity")?);
                t.finish()?;
            }
            "link" => {
                let idx = t.int("link")?;
                if idx < 0 {
                    return Err(t.err("link index must be non-negative"));
                }
                t.keyword("parent")?;
                let parent = t.int("parent")?;
                t.keyword("joint")?;
                let kind = match t.word("joint")? {
                    "revolute" => JointKind::Revolute,
                    "prismatic" => JointKind::Prismatic,
                    "fixed" => JointKind::Fixed,
                    other => return Err(t.err(format!("unknown joint kind `{other}`"))),
                };
                t.keyword("axis")?;
                let mut axis = Vector3::from(t.vec3("axis")?);
                t.keyword("origin")?;
                let xyz = t.vec3("origin")?;
                t.keyword("rpy")?;
                let rpy = t.vec3("rpy")?;
                t.keyword("mass")?;
                let mass = t.num("mass")?;
                t.keyword("com")?;
                let com = Vector3::from(t.vec3("com")?);
                t.keyword("inertia")?;
                let diag = t.vec3("inertia")?;
                let off = t.vec3("inertia")?;
                t.finish()?;

                if kind != JointKind::Fixed {
                    let norm = axis.norm();
                    if norm < 1e-9 {
                        return Err(t.err("joint axis must be non-zero"));
                    }
                    if (norm - 1.0).abs() > 1e-12 {
                        axis = Unit::new_normalize(axis).into_inner();
                    }
                }
                let rec = LinkRecord {
                    line,
                    parent,
                    joint: JointDef::new(kind, axis, None, xyz, rpy),
                    inertia: LinkInertia::new(mass, com, diag, off),
                };
                if records.insert(idx as usize, rec).is_some() {
                    return Err(t.err(format!("duplicate link {idx}")));
                }
            }
            other => return Err(t.err(format!("unknown record `{other}`"))),
        }
    }

    let (name, dof) = header.ok_or_else(|| Error::Parse(ParseError { line: 0, message: "missing `robot` header".into() }))?;
    let count = records.len();
    if count == 0 {
        return Err(Error::Parse(ParseError { line: 0, message: "no links".into() }));
    }
    if let Some((&last, _)) = records.iter().next_back() {
        if last != count - 1 {
            return Err(Error::Parse(ParseError {
                line: 0,
                message: format!("link indices must be 0..{}; found {last}", count - 1),
            }));
        }
    }

    // Cycle detection before the ordering check so that loops are reported as such.
    for (&idx, rec) in &records {
        let mut seen = vec![false; count];
        seen[idx] = true;
        let mut p = rec.parent;
        while p >= 0 {
            let pu = p as usize;
            if pu >= count {
                return Err(Error::Parse(ParseError {
                    line: rec.line,
                    message: format!("link {idx}: parent {p} does not exist"),
                }));
            }
            if seen[pu] {
                return Err(Error::Parse(ParseError {
                    line: rec.line,
                    message: format!("cycle in kinematic tree through link {idx}"),
                }));
            }
            seen[pu] = true;
            p = records[&pu].parent;
        }
        if rec.parent >= idx as i64 {
            return Err(Error::Parse(ParseError {
                line: rec.line,
                message: format!("non-topological order: link {idx} has parent {}", rec.parent),
            }));
        }
    }

    let mut joints = Vec::with_capacity(count);
    let mut links = Vec::with_capacity(count);
    for (_, rec) in records {
        let mut j = rec.joint;
        j.parent = (rec.parent >= 0).then_some(rec.parent as usize);
        joints.push(j);
        links.push(rec.inertia);
    }
    let model = RobotModel::new(name, joints, links, gravity)?;
    if model.dof() != dof {
        return Err(Error::Parse(ParseError {
            line: 1,
            message: format!("header declares dof {dof} but the tree has {}", model.dof()),
        }));
    }
    Ok(model)
}

/// Serial chain of `n` revolute links of length `length` along x,
/// alternating joint axes z, y, x so the chain is spatial.
pub fn serial_chain(n: usize, length: f64, mass: f64) -> RobotModel {
    let axes = [Vector3::z(), Vector3::y(), Vector3::x()];
    let mut joints = Vec::with_capacity(n);
    let mut links = Vec::with_capacity(n);
    for i in 0..n {
        let parent = i.checked_sub(1);
        let xyz = if i == 0 { [0.0; 3] } else { [length, 0.0, 0.0] };
        joints.push(JointDef::new(JointKind::Revolute, axes[i % 3], parent, xyz, [0.0; 3]));
        links.push(LinkInertia::cuboid(
            mass,
            Vector3::new(0.5 * length, 0.0, 0.0),
            [length, 0.1 * length, 0.1 * length],
        ));
    }
    RobotModel::new(format!("chain{n}"), joints, links, Vector3::from(DEFAULT_GRAVITY))
        .expect("generated chain is valid")
}

/// Planar chain of point masses at the link tips, all joints about z.
pub fn planar_chain(lengths: &[f64], masses: &[f64]) -> RobotModel {
    assert_eq!(lengths.len(), masses.len());
    let mut joints = Vec::new();
    let mut links = Vec::new();
    for (i, (&l, &m)) in lengths.iter().zip(masses).enumerate() {
        let xyz = if i == 0 { [0.0; 3] } else { [lengths[i - 1], 0.0, 0.0] };
        joints.push(JointDef::new(JointKind::Revolute, Vector3::z(), i.checked_sub(1), xyz, [0.0; 3]));
        links.push(LinkInertia::point_mass(m, Vector3::new(l, 0.0, 0.0)));
    }
    RobotModel::new("planar", joints, links, Vector3::from(DEFAULT_GRAVITY)).expect("valid planar chain")
}

/// Random tree with `n` dofs plus a few fixed links, used by tests and
/// benchmarks. Joint kinds, axes, origins and inertias are all randomized.
pub fn random_tree(n: usize, rng: &mut impl Rng, branching: bool, with_prismatic: bool) -> RobotModel {
    let mut joints: Vec<JointDef> = Vec::new();
    let mut links = Vec::new();
    let mut dofs = 0;
    while dofs < n {
        let i = joints.len();
        let parent = if i == 0 {
            None
        } else if branching {
            Some(rng.random_range(i.saturating_sub(3)..i))
        } else {
            Some(i - 1)
        };
        let kind = if i > 0 && rng.random_bool(0.1) {
            JointKind::Fixed
        } else if with_prismatic && rng.random_bool(0.2) {
            JointKind::Prismatic
        } else {
            JointKind::Revolute
        };
        if kind != JointKind::Fixed {
            dofs += 1;
        }
        let axis = Unit::new_normalize(Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ))
        .into_inner();
        let xyz = if i == 0 {
            [0.0; 3]
        } else {
            [rng.random_range(0.1..0.5), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)]
        };
        let rpy = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        joints.push(JointDef::new(kind, axis, parent, xyz, rpy));
        let mass = rng.random_range(0.5..3.0);
        let com = Vector3::new(rng.random_range(0.0..0.3), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
        let size = [rng.random_range(0.05..0.4), rng.random_range(0.05..0.4), rng.random_range(0.05..0.4)];
        let mut l = LinkInertia::cuboid(mass, com, size);
        let r = rpy_to_matrix([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0]);
        l.inertia = r * l.inertia * r.transpose();
        l.inertia = 0.5 * (l.inertia + l.inertia.transpose());
        links.push(l);
    }
    RobotModel::new(format!("random{n}"), joints, links, Vector3::from(DEFAULT_GRAVITY)).expect("random tree is valid")
}

pub fn random_state(n: usize, rng: &mut impl Rng) -> RobotState {
    RobotState::new(
        DVector::from_fn(n, |_, _| rng.random_range(-1.5..1.5)),
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
    )
}
