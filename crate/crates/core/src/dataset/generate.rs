//! Procedural box furniture with exactly mating contact patches.
//!
//! Every part is a cuboid. Each designed contact is an axis-aligned
//! rectangle shared by two touching faces; both parts carry the same 10×5
//! grid of points on it, so the detected joints coincide at the ground-truth
//! assembly. Remaining points are sampled on the box surface away from the
//! contact footprints and thinned by furthest point sampling. Congruent parts
//! are literal copies of one template cloud.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnnotateParams, ShapeInstance, DEFAULT_JOINT_TAU};
use crate::geom::{canonicalize, dist2, furthest_point_sample, PointCloud, Pose, Quat, Vec3};
use crate::{Error, Result};

const PATCH_LONG: usize = 10;
const PATCH_SHORT: usize = 5;
/// Points per contact patch.
pub const PATCH_POINTS: usize = PATCH_LONG * PATCH_SHORT;
/// Fraction of the smaller face covered by a patch.
const PATCH_FILL: f64 = 0.8;
/// Clearance kept free of surface samples around each patch.
const FOOTPRINT_MARGIN: f64 = 0.01;
/// Minimum surface samples per part besides patches.
const MIN_SURFACE_POINTS: usize = 32;
/// Candidate oversampling before furthest point thinning.
const OVERSAMPLE: usize = 4;
/// Minimum distance between the centres of two contacts.
const MIN_CONTACT_SEPARATION: f64 = 0.1;
/// Smallest face dimension that can host a patch.
const MIN_PATCH_FACE: f64 = 0.02;
const PLANE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Chair,
    Table,
    Cabinet,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Chair, Category::Table, Category::Cabinet];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Chair => "chair",
            Category::Table => "table",
            Category::Cabinet => "cabinet",
        }
    }

    /// Draws structural parameters from this category's default ranges.
    pub fn sample_params<R: Rng + ?Sized>(self, rng: &mut R) -> CategoryParams {
        match self {
            Category::Chair => CategoryParams::Chair(ChairParams {
                seat: [
                    rng.random_range(0.40..0.55),
                    rng.random_range(0.38..0.50),
                    rng.random_range(0.06..0.08),
                ],
                leg_height: rng.random_range(0.35..0.45),
                leg_section: [rng.random_range(0.045..0.055), rng.random_range(0.06..0.07)],
                back_height: rng.random_range(0.30..0.42),
                back_thickness: rng.random_range(0.075..0.09),
            }),
            Category::Table => CategoryParams::Table(TableParams {
                top: [
                    rng.random_range(0.60..0.90),
                    rng.random_range(0.45..0.65),
                    rng.random_range(0.05..0.07),
                ],
                leg_height: rng.random_range(0.40..0.60),
                leg_section: [rng.random_range(0.045..0.055), rng.random_range(0.06..0.07)],
            }),
            Category::Cabinet => CategoryParams::Cabinet(CabinetParams {
                width: rng.random_range(0.50..0.80),
                depth: rng.random_range(0.30..0.45),
                height: rng.random_range(0.60..0.90),
                side_thickness: rng.random_range(0.04..0.06),
                shelf_thickness: rng.random_range(0.03..0.045),
                shelves: rng.random_range(2..=4),
            }),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chair" => Ok(Category::Chair),
            "table" => Ok(Category::Table),
            "cabinet" => Ok(Category::Cabinet),
            other => Err(Error::invalid(format!(
                "unknown category {other:?}, expected chair, table or cabinet"
            ))),
        }
    }
}

/// Seat, a backrest standing on the rear of the seat, and four legs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChairParams {
    /// Width, depth, thickness.
    pub seat: Vec3,
    pub leg_height: f64,
    pub leg_section: [f64; 2],
    pub back_height: f64,
    pub back_thickness: f64,
}

/// Table top on four legs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableParams {
    pub top: Vec3,
    pub leg_height: f64,
    pub leg_section: [f64; 2],
}

/// Two side boards holding `shelves` identical boards; the outer shelves
/// close the carcass at the top and bottom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CabinetParams {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    pub side_thickness: f64,
    pub shelf_thickness: f64,
    pub shelves: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "category", rename_all = "lowercase")]
pub enum CategoryParams {
    Chair(ChairParams),
    Table(TableParams),
    Cabinet(CabinetParams),
}

impl CategoryParams {
    pub fn category(&self) -> Category {
        match self {
            CategoryParams::Chair(_) => Category::Chair,
            CategoryParams::Table(_) => Category::Table,
            CategoryParams::Cabinet(_) => Category::Cabinet,
        }
    }
}

/// What to generate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenSpec {
    pub category: Category,
    /// Explicit structure; drawn from the seed when `None`.
    pub params: Option<CategoryParams>,
    /// Target points per part. Parts with many contacts may get more so
    /// that every patch fits.
    pub points_per_part: usize,
}

impl GenSpec {
    pub fn new(category: Category, points_per_part: usize) -> Self {
        Self {
            category,
            params: None,
            points_per_part,
        }
    }
}

/// Per-shape seed: the `index`-th stream of a ChaCha8 generator keyed by the
/// global seed. Independent of how shapes are scheduled.
pub fn shape_seed(global: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(global);
    rng.set_stream(index);
    rng.next_u64()
}

/// Generates one shape deterministically from `seed`.
pub fn generate_shape(spec: &GenSpec, shape_id: &str, seed: u64) -> Result<ShapeInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = match spec.params {
        Some(p) if p.category() != spec.category => {
            return Err(Error::Generation(format!(
                "{} parameters given for a {}",
                p.category(),
                spec.category
            )))
        }
        Some(p) => p,
        None => spec.category.sample_params(&mut rng),
    };
    let layout = match params {
        CategoryParams::Chair(p) => chair_layout(&p)?,
        CategoryParams::Table(p) => table_layout(&p)?,
        CategoryParams::Cabinet(p) => cabinet_layout(&p)?,
    };
    layout.realize(shape_id, spec.category.as_str(), spec.points_per_part, &mut rng)
}

/// Generates `count` shapes named `<category>_<index>`, cycling through
/// `categories`. Shapes are built in parallel; the output does not depend on
/// the thread count.
pub fn generate_dataset(
    categories: &[Category],
    count: usize,
    seed: u64,
    points_per_part: usize,
) -> Result<Vec<ShapeInstance>> {
    if categories.is_empty() && count > 0 {
        return Err(Error::invalid("no categories to generate"));
    }
    (0..count)
        .into_par_iter()
        .map(|i| {
            let category = categories[i % categories.len()];
            let id = format!("{category}_{i:04}");
            generate_shape(&GenSpec::new(category, points_per_part), &id, shape_seed(seed, i as u64))
        })
        .collect()
}

/// Two identical plates stacked face to face with one contact patch: the
/// smallest peg-hole assembly. `size` is width, depth, thickness.
pub fn generate_plank_pair(size: Vec3, points_per_part: usize, seed: u64) -> Result<ShapeInstance> {
    check_positive("plank size", &size)?;
    if size[0].min(size[1]) < MIN_PATCH_FACE {
        return Err(Error::Generation("plank face too small for a contact patch".into()));
    }
    let half_t = size[2] / 2.0;
    let flip = Quat::from_axis_angle([1.0, 0.0, 0.0], std::f64::consts::PI);
    let layout = Layout {
        boxes: vec![
            BoxPart::new(size, placement(flip, [0.0, 0.0, half_t])?, 0),
            BoxPart::new(size, placement(Quat::IDENTITY, [0.0, 0.0, -half_t])?, 0),
        ],
        contacts: vec![Contact::centred(0, 1, 2, 0.0, [0.0, 0.0], [size[0], size[1]])],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    layout.realize("plank_pair", "plank", points_per_part, &mut rng)
}

#[derive(Debug, Clone)]
struct BoxPart {
    size: Vec3,
    placement: Pose,
    template: usize,
}

impl BoxPart {
    fn new(size: Vec3, placement: Pose, template: usize) -> Self {
        Self {
            size,
            placement,
            template,
        }
    }
}

/// Axis-aligned contact rectangle in world coordinates, on the plane
/// `x[axis] = plane`.
#[derive(Debug, Clone)]
struct Contact {
    parts: (usize, usize),
    axis: usize,
    plane: f64,
    centre: [f64; 2],
    half: [f64; 2],
}

impl Contact {
    /// Contact whose rectangle covers `PATCH_FILL` of a face of the given
    /// in-plane `extent`.
    fn centred(a: usize, b: usize, axis: usize, plane: f64, centre: [f64; 2], extent: [f64; 2]) -> Self {
        Contact {
            parts: (a, b),
            axis,
            plane,
            centre,
            half: [extent[0] * PATCH_FILL / 2.0, extent[1] * PATCH_FILL / 2.0],
        }
    }

    fn in_plane_axes(&self) -> [usize; 2] {
        in_plane_axes(self.axis)
    }

    fn centre_point(&self) -> Vec3 {
        let mut p = [0.0; 3];
        let [u, v] = self.in_plane_axes();
        p[self.axis] = self.plane;
        p[u] = self.centre[0];
        p[v] = self.centre[1];
        p
    }

    /// The shared patch: `PATCH_LONG` samples along the longer side,
    /// `PATCH_SHORT` along the shorter.
    fn grid(&self) -> Vec<Vec3> {
        let [u, v] = self.in_plane_axes();
        let (long, short) = if self.half[0] >= self.half[1] { (0, 1) } else { (1, 0) };
        let axes = [u, v];
        let mut out = Vec::with_capacity(PATCH_POINTS);
        for i in 0..PATCH_LONG {
            for j in 0..PATCH_SHORT {
                let mut p = [0.0; 3];
                p[self.axis] = self.plane;
                p[axes[long]] = self.centre[long] + lerp(self.half[long], i, PATCH_LONG);
                p[axes[short]] = self.centre[short] + lerp(self.half[short], j, PATCH_SHORT);
                out.push(p);
            }
        }
        out
    }

    fn covers(&self, w: Vec3) -> bool {
        let [u, v] = self.in_plane_axes();
        (w[self.axis] - self.plane).abs() <= PLANE_TOL
            && (w[u] - self.centre[0]).abs() <= self.half[0] + FOOTPRINT_MARGIN
            && (w[v] - self.centre[1]).abs() <= self.half[1] + FOOTPRINT_MARGIN
    }

    fn shift(&mut self, by: Vec3) {
        let [u, v] = self.in_plane_axes();
        self.plane += by[self.axis];
        self.centre[0] += by[u];
        self.centre[1] += by[v];
    }
}

fn lerp(half: f64, i: usize, n: usize) -> f64 {
    -half + 2.0 * half * i as f64 / (n - 1) as f64
}

fn in_plane_axes(axis: usize) -> [usize; 2] {
    match axis {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    }
}

struct Layout {
    boxes: Vec<BoxPart>,
    contacts: Vec<Contact>,
}

impl Layout {
    fn realize<R: Rng>(mut self, shape_id: &str, category: &str, points: usize, rng: &mut R) -> Result<ShapeInstance> {
        if points == 0 {
            return Err(Error::Generation("points per part must be positive".into()));
        }
        self.centre_in_unit_cube()?;
        self.check_contact_separation()?;

        let n = self.boxes.len();
        let mut clouds: Vec<Option<PointCloud>> = vec![None; n];
        let mut poses = vec![Pose::IDENTITY; n];
        let mut template_frames: Vec<Option<(PointCloud, Pose, usize)>> = vec![None; n];
        for i in 0..n {
            let t = self.boxes[i].template;
            if template_frames[t].is_none() {
                let local = self.local_cloud(i, points, rng.next_u64())?;
                let can = canonicalize(&local)?;
                template_frames[t] = Some((can.cloud, can.pose, i));
            }
            let (cloud, frame, rep) = template_frames[t].as_ref().expect("template built");
            if *rep != i {
                self.check_copy(i, *rep)?;
            }
            clouds[i] = Some(cloud.clone());
            poses[i] = self.boxes[i].placement.then_after(frame);
        }
        let parts: Vec<PointCloud> = clouds.into_iter().map(|c| c.expect("every part built")).collect();

        let shape = ShapeInstance::annotate(shape_id, category, parts, poses, &AnnotateParams {
            joint_points: PATCH_POINTS,
            ..AnnotateParams::default()
        })?;
        if shape.joint_pair_count() != self.contacts.len() {
            return Err(Error::Generation(format!(
                "{shape_id}: layout has {} contacts but {} joint pairs were detected",
                self.contacts.len(),
                shape.joint_pair_count()
            )));
        }
        let mut designed: Vec<Vec<usize>> = Vec::new();
        for t in 0..n {
            let members: Vec<usize> = (0..n).filter(|&i| self.boxes[i].template == t).collect();
            if !members.is_empty() {
                designed.push(members);
            }
        }
        designed.sort_by_key(|c| c[0]);
        if shape.congruent_classes != designed {
            return Err(Error::Generation(format!(
                "{shape_id}: congruent classes {:?} differ from the designed {:?}",
                shape.congruent_classes, designed
            )));
        }
        Ok(shape)
    }

    fn centre_in_unit_cube(&mut self) -> Result<()> {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for b in &self.boxes {
            for corner in box_corners(b.size) {
                let w = b.placement.transform_point(corner);
                for k in 0..3 {
                    lo[k] = lo[k].min(w[k]);
                    hi[k] = hi[k].max(w[k]);
                }
            }
        }
        if (0..3).any(|k| hi[k] - lo[k] > 1.0) {
            return Err(Error::Generation(format!(
                "assembled extents {:?} do not fit the unit cube",
                [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]
            )));
        }
        let shift = [
            -(lo[0] + hi[0]) / 2.0,
            -(lo[1] + hi[1]) / 2.0,
            -(lo[2] + hi[2]) / 2.0,
        ];
        for b in &mut self.boxes {
            let t = b.placement.translation;
            b.placement = Pose::new(b.placement.rotation, [t[0] + shift[0], t[1] + shift[1], t[2] + shift[2]])?;
        }
        for c in &mut self.contacts {
            c.shift(shift);
        }
        Ok(())
    }

    fn check_contact_separation(&self) -> Result<()> {
        for (a, ca) in self.contacts.iter().enumerate() {
            for cb in &self.contacts[a + 1..] {
                let d = dist2(ca.centre_point(), cb.centre_point()).sqrt();
                if d < MIN_CONTACT_SEPARATION {
                    return Err(Error::Generation(format!(
                        "contact centres only {d:.4} apart, need {MIN_CONTACT_SEPARATION}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn contacts_of(&self, part: usize) -> impl Iterator<Item = &Contact> {
        self.contacts
            .iter()
            .filter(move |c| c.parts.0 == part || c.parts.1 == part)
    }

    /// Surface samples plus patch grids of part `i`, in its box frame.
    fn local_cloud(&self, i: usize, points: usize, seed: u64) -> Result<PointCloud> {
        let b = &self.boxes[i];
        let to_local = b.placement.inverse();
        let contacts: Vec<&Contact> = self.contacts_of(i).collect();
        let surface = (points.saturating_sub(PATCH_POINTS * contacts.len())).max(MIN_SURFACE_POINTS);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let candidates = sample_surface(b, &contacts, surface * OVERSAMPLE, &mut rng)?;
        let candidates = PointCloud::new(candidates)?;
        let keep = furthest_point_sample(&candidates, surface, rng.next_u64())?;
        let mut pts: Vec<Vec3> = keep.iter().map(|&k| candidates.points()[k]).collect();
        for c in contacts {
            pts.extend(c.grid().into_iter().map(|w| to_local.transform_point(w)));
        }
        PointCloud::new(pts)
    }

    /// A copy reuses its template's cloud, so its patches must sit where the
    /// template's do.
    fn check_copy(&self, copy: usize, rep: usize) -> Result<()> {
        let local_patches = |part: usize| -> Vec<Vec3> {
            let inv = self.boxes[part].placement.inverse();
            self.contacts_of(part)
                .flat_map(|c| c.grid())
                .map(|w| inv.transform_point(w))
                .collect()
        };
        let (a, b) = (local_patches(copy), local_patches(rep));
        let matched = a.len() == b.len()
            && a.iter()
                .all(|p| b.iter().any(|q| dist2(*p, *q) <= 1e-18));
        if !matched {
            return Err(Error::Generation(format!(
                "part {copy} is declared a copy of part {rep} but its contacts differ"
            )));
        }
        Ok(())
    }
}

fn sample_surface<R: Rng>(b: &BoxPart, contacts: &[&Contact], count: usize, rng: &mut R) -> Result<Vec<Vec3>> {
    let s = b.size;
    let areas = [s[1] * s[2], s[0] * s[2], s[0] * s[1]];
    let total = 2.0 * (areas[0] + areas[1] + areas[2]);
    let mut out = Vec::with_capacity(count);
    let max_attempts = count * 1000;
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Generation("contact patches leave too little free surface".into()));
        }
        let mut pick = rng.random_range(0.0..total);
        let mut face = 0;
        while face < 5 && pick >= areas[face / 2] {
            pick -= areas[face / 2];
            face += 1;
        }
        let axis = face / 2;
        let sign = if face % 2 == 0 { -1.0 } else { 1.0 };
        let mut p = [0.0; 3];
        for k in 0..3 {
            p[k] = if k == axis {
                sign * s[k] / 2.0
            } else {
                rng.random_range(-s[k] / 2.0..s[k] / 2.0)
            };
        }
        let w = b.placement.transform_point(p);
        if contacts.iter().any(|c| c.covers(w)) {
            continue;
        }
        out.push(p);
    }
    Ok(out)
}

fn box_corners(s: Vec3) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(8);
    for &x in &[-0.5, 0.5] {
        for &y in &[-0.5, 0.5] {
            for &z in &[-0.5, 0.5] {
                out.push([x * s[0], y * s[1], z * s[2]]);
            }
        }
    }
    out
}

fn placement(rotation: Quat, translation: Vec3) -> Result<Pose> {
    Pose::new(rotation, translation)
}

fn check_positive(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Generation(format!("{what} must be positive, got {values:?}")));
    }
    Ok(())
}

/// Leg placements under a rectangular top of the given size: corners inset
/// so that the legs stay inside the top's footprint.
fn leg_layout(
    boxes: &mut Vec<BoxPart>,
    contacts: &mut Vec<Contact>,
    top: usize,
    top_size: Vec3,
    leg_height: f64,
    section: [f64; 2],
) -> Result<()> {
    let inset = 0.02;
    let hx = top_size[0] / 2.0 - inset - section[0] / 2.0;
    let hy = top_size[1] / 2.0 - inset - section[1] / 2.0;
    if hx * 2.0 - section[0] < DEFAULT_JOINT_TAU || hy * 2.0 - section[1] < DEFAULT_JOINT_TAU {
        return Err(Error::Generation("legs too close together for the top".into()));
    }
    let template = boxes.len();
    let underside = -top_size[2] / 2.0;
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let id = boxes.len();
        let centre = [sx * hx, sy * hy, underside - leg_height / 2.0];
        boxes.push(BoxPart::new(
            [section[0], section[1], leg_height],
            placement(Quat::IDENTITY, centre)?,
            template,
        ));
        contacts.push(Contact::centred(top, id, 2, underside, [centre[0], centre[1]], section));
    }
    Ok(())
}

fn check_leg_section(section: [f64; 2]) -> Result<()> {
    check_positive("leg section", &section)?;
    if section[0].min(section[1]) < MIN_PATCH_FACE {
        return Err(Error::Generation("leg section too small for a contact patch".into()));
    }
    Ok(())
}

fn chair_layout(p: &ChairParams) -> Result<Layout> {
    check_positive("seat", &p.seat)?;
    check_positive("chair dimensions", &[p.leg_height, p.back_height, p.back_thickness])?;
    check_leg_section(p.leg_section)?;
    if p.seat[2] <= DEFAULT_JOINT_TAU {
        return Err(Error::Generation(format!(
            "seat thickness {} would let the legs touch the back",
            p.seat[2]
        )));
    }
    let back_width = p.seat[0] * 0.9;
    if p.back_thickness * 2.0 > p.seat[1] || p.back_thickness < MIN_PATCH_FACE {
        return Err(Error::Generation("back thickness does not fit the seat".into()));
    }
    let mut boxes = vec![BoxPart::new(p.seat, Pose::IDENTITY, 0)];
    let mut contacts = Vec::new();
    let back_y = -p.seat[1] / 2.0 + p.back_thickness / 2.0;
    let top = p.seat[2] / 2.0;
    boxes.push(BoxPart::new(
        [back_width, p.back_thickness, p.back_height],
        placement(Quat::IDENTITY, [0.0, back_y, top + p.back_height / 2.0])?,
        1,
    ));
    leg_layout(&mut boxes, &mut contacts, 0, p.seat, p.leg_height, p.leg_section)?;
    contacts.push(Contact::centred(0, 1, 2, top, [0.0, back_y], [back_width, p.back_thickness]));
    Ok(Layout { boxes, contacts })
}

fn table_layout(p: &TableParams) -> Result<Layout> {
    check_positive("table top", &p.top)?;
    check_positive("leg height", &[p.leg_height])?;
    check_leg_section(p.leg_section)?;
    let mut boxes = vec![BoxPart::new(p.top, Pose::IDENTITY, 0)];
    let mut contacts = Vec::new();
    leg_layout(&mut boxes, &mut contacts, 0, p.top, p.leg_height, p.leg_section)?;
    Ok(Layout { boxes, contacts })
}

fn cabinet_layout(p: &CabinetParams) -> Result<Layout> {
    check_positive(
        "cabinet dimensions",
        &[p.width, p.depth, p.height, p.side_thickness, p.shelf_thickness],
    )?;
    if p.shelves < 2 {
        return Err(Error::Generation("a cabinet needs at least two shelves".into()));
    }
    let inner = p.width - 2.0 * p.side_thickness;
    if inner < DEFAULT_JOINT_TAU {
        return Err(Error::Generation("side boards overlap".into()));
    }
    let shelf_depth = p.depth * 0.95;
    if p.shelf_thickness < MIN_PATCH_FACE || shelf_depth < MIN_PATCH_FACE {
        return Err(Error::Generation("shelf end too small for a contact patch".into()));
    }
    let pitch = (p.height - p.shelf_thickness) / (p.shelves - 1) as f64;
    if pitch - p.shelf_thickness <= DEFAULT_JOINT_TAU {
        return Err(Error::Generation(format!(
            "{} shelves leave gaps of {:.4}, not above the contact threshold",
            p.shelves,
            pitch - p.shelf_thickness
        )));
    }
    let half_turn = Quat::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::PI);
    let side_size = [p.side_thickness, p.depth, p.height];
    let side_x = inner / 2.0 + p.side_thickness / 2.0;
    let mut boxes = vec![
        BoxPart::new(side_size, placement(Quat::IDENTITY, [-side_x, 0.0, 0.0])?, 0),
        BoxPart::new(side_size, placement(half_turn, [side_x, 0.0, 0.0])?, 0),
    ];
    let mut contacts = Vec::new();
    for s in 0..p.shelves {
        let z = -p.height / 2.0 + p.shelf_thickness / 2.0 + pitch * s as f64;
        let id = boxes.len();
        boxes.push(BoxPart::new(
            [inner, shelf_depth, p.shelf_thickness],
            placement(Quat::IDENTITY, [0.0, 0.0, z])?,
            2,
        ));
        let end = [shelf_depth, p.shelf_thickness];
        contacts.push(Contact::centred(0, id, 0, -inner / 2.0, [0.0, z], end));
        contacts.push(Contact::centred(1, id, 0, inner / 2.0, [0.0, z], end));
    }
    Ok(Layout { boxes, contacts })
}
