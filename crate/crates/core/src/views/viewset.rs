use super::{Image, Permutation, ViewTransform};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// One parameter grid of a single transform family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Rotation angles in degrees, multiples of 90.
    Rotation(Vec<u32>),
    Permutation(Vec<Permutation>),
    /// Sharpness blend factors.
    Sharpness(Vec<f64>),
}

impl Family {
    fn transforms(&self) -> Result<Vec<ViewTransform>> {
        match self {
            Family::Rotation(degrees) => degrees
                .iter()
                .map(|&d| {
                    if d % 90 != 0 || d >= 360 {
                        return Err(Error::ViewSet(format!(
                            "rotation {d} is not one of 0, 90, 180, 270"
                        )));
                    }
                    ViewTransform::rotation((d / 90) as u8)
                })
                .collect(),
            Family::Permutation(perms) => Ok(perms
                .iter()
                .map(|&perm| ViewTransform::ChannelPermutation { perm })
                .collect()),
            Family::Sharpness(gammas) => gammas
                .iter()
                .map(|&g| ViewTransform::sharpness(g))
                .collect(),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Family::Rotation(_) => "rot",
            Family::Permutation(_) => "perm",
            Family::Sharpness(_) => "sharp",
        }
    }
}

/// Declarative view configuration: the Cartesian product of transform
/// families. An empty family list denotes the identity-only set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ViewSetSpec {
    pub families: Vec<Family>,
}

impl ViewSetSpec {
    pub fn identity() -> Self {
        ViewSetSpec { families: vec![] }
    }

    pub fn rotations() -> Self {
        ViewSetSpec {
            families: vec![Family::Rotation(vec![0, 90, 180, 270])],
        }
    }

    pub fn permutations(names: &[&str]) -> Result<Self> {
        let perms = names.iter().map(|n| n.parse()).collect::<Result<_>>()?;
        Ok(ViewSetSpec {
            families: vec![Family::Permutation(perms)],
        })
    }

    /// Number of views the spec expands to.
    pub fn view_count(&self) -> usize {
        self.families
            .iter()
            .map(|f| match f {
                Family::Rotation(v) => v.len(),
                Family::Permutation(v) => v.len(),
                Family::Sharpness(v) => v.len(),
            })
            .product()
    }
}

/// Compact text form: families joined by `*`, each `name=v1,v2,...`.
/// For example `rot=0,90,180,270*sharp=1,0,0.5,1.5` or `perm=RGB,GRB,BGR`.
/// The literal `identity` denotes the empty product.
impl std::str::FromStr for ViewSetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "identity" {
            return Ok(ViewSetSpec::identity());
        }
        let mut families = Vec::new();
        for part in s.split('*') {
            let (name, values) = part.split_once('=').ok_or_else(|| {
                Error::ViewSet(format!("`{part}` is not of the form family=v1,v2"))
            })?;
            let values: Vec<&str> = values
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .collect();
            let bad = |v: &str| Error::ViewSet(format!("bad value `{v}` for family `{name}`"));
            let family = match name.trim() {
                "rot" | "rotation" => Family::Rotation(
                    values
                        .iter()
                        .map(|v| v.parse().map_err(|_| bad(v)))
                        .collect::<Result<_>>()?,
                ),
                "perm" | "permutation" => {
                    Family::Permutation(values.iter().map(|v| v.parse()).collect::<Result<_>>()?)
                }
                "sharp" | "sharpness" => Family::Sharpness(
                    values
                        .iter()
                        .map(|v| v.parse().map_err(|_| bad(v)))
                        .collect::<Result<_>>()?,
                ),
                other => {
                    return Err(Error::ViewSet(format!(
                        "unknown transform family `{other}`"
                    )))
                }
            };
            families.push(family);
        }
        Ok(ViewSetSpec { families })
    }
}

impl fmt::Display for ViewSetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.families.is_empty() {
            return f.write_str("identity");
        }
        for (i, fam) in self.families.iter().enumerate() {
            if i > 0 {
                f.write_str("*")?;
            }
            let values: Vec<String> = match fam {
                Family::Rotation(v) => v.iter().map(|d| d.to_string()).collect(),
                Family::Permutation(v) => v.iter().map(|p| p.to_string()).collect(),
                Family::Sharpness(v) => v.iter().map(|g| g.to_string()).collect(),
            };
            write!(f, "{}={}", fam.name(), values.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub label: usize,
    pub transform: ViewTransform,
}

/// Ordered views with labels `0..=M`; view 0 is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewSet {
    views: Vec<View>,
}

impl ViewSet {
    /// Expands a spec into its Cartesian product. Within each family the
    /// identity element is moved to the front (the rest keep their order),
    /// and the first family varies slowest, so label 0 is the all-identity
    /// combination.
    pub fn build(spec: &ViewSetSpec) -> Result<Self> {
        let mut grids: Vec<Vec<ViewTransform>> = Vec::new();
        for fam in &spec.families {
            let mut ts = fam.transforms()?;
            if ts.is_empty() {
                return Err(Error::ViewSet(format!(
                    "family `{}` has no values",
                    fam.name()
                )));
            }
            for (i, a) in ts.iter().enumerate() {
                if ts[..i].contains(a) {
                    return Err(Error::ViewSet(format!(
                        "duplicate `{a}` in family `{}`",
                        fam.name()
                    )));
                }
            }
            let pos = ts.iter().position(|t| t.is_identity()).ok_or_else(|| {
                Error::ViewSet(format!(
                    "family `{}` lacks its identity element; view 0 must be the original image",
                    fam.name()
                ))
            })?;
            let id = ts.remove(pos);
            ts.insert(0, id);
            grids.push(ts);
        }
        let mut combos: Vec<Vec<ViewTransform>> = vec![vec![]];
        for grid in &grids {
            combos = combos
                .iter()
                .flat_map(|prefix| {
                    grid.iter().map(move |t| {
                        let mut c = prefix.clone();
                        c.push(t.clone());
                        c
                    })
                })
                .collect();
        }
        let views = combos
            .into_iter()
            .enumerate()
            .map(|(label, mut steps)| {
                let transform = match steps.len() {
                    0 => ViewTransform::Rotation { quarter_turns: 0 },
                    1 => steps.remove(0),
                    _ => ViewTransform::Composition { steps },
                };
                View { label, transform }
            })
            .collect();
        Self::from_views(views)
    }

    /// Wraps an explicit list, checking label contiguity and identity at 0.
    pub fn from_views(views: Vec<View>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::ViewSet(
                "a view set needs at least the identity view".into(),
            ));
        }
        for (i, v) in views.iter().enumerate() {
            if v.label != i {
                return Err(Error::ViewSet(format!(
                    "view at position {i} has label {}",
                    v.label
                )));
            }
            v.transform.validate()?;
        }
        if !views[0].transform.is_identity() {
            return Err(Error::ViewSet(format!(
                "view 0 is `{}`, not the identity",
                views[0].transform
            )));
        }
        Ok(ViewSet { views })
    }

    pub fn identity() -> Self {
        Self::build(&ViewSetSpec::identity()).expect("identity set is valid")
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    /// Number of non-identity views, `M`.
    pub fn m(&self) -> usize {
        self.views.len() - 1
    }

    pub fn views(&self) -> &[View] {
        &self.views
    }

    pub fn labels(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.label).collect()
    }

    pub fn swaps_axes(&self) -> bool {
        self.views.iter().any(|v| v.transform.swaps_axes())
    }

    /// Every view of one image, in label order.
    pub fn expand(&self, img: &Image) -> Result<Vec<Image>> {
        self.views.iter().map(|v| v.transform.apply(img)).collect()
    }

    /// Views restricted to a new order; used to test order invariance.
    pub fn reordered(&self, order: &[usize]) -> Vec<View> {
        order.iter().map(|&i| self.views[i].clone()).collect()
    }
}
