//! 2-D projection export of directional representations, for cluster plots.

use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{pca_project, Matrix};
use crate::model::write_atomic;
use crate::probe::DirectionalRep;

/// Project the concatenated directions to two principal components and
/// write `question_id,category,cluster,x,y` rows. Output bytes are
/// deterministic for fixed inputs.
pub fn export_projection(
    reps: &[DirectionalRep],
    categories: &[String],
    clusters: &[usize],
    path: &Path,
) -> Result<()> {
    let csv = projection_csv(reps, categories, clusters)?;
    write_atomic(path, csv.as_bytes())
}

/// The CSV text behind [`export_projection`].
pub fn projection_csv(
    reps: &[DirectionalRep],
    categories: &[String],
    clusters: &[usize],
) -> Result<String> {
    if reps.len() < 2 {
        return Err(Error::InvalidArg(
            "projection needs at least two representations".into(),
        ));
    }
    if categories.len() != reps.len() || clusters.len() != reps.len() {
        return Err(Error::DimMismatch(format!(
            "{} reps vs {} categories vs {} cluster labels",
            reps.len(),
            categories.len(),
            clusters.len()
        )));
    }
    let dim = reps[0].concat().len();
    let mut data = Vec::with_capacity(reps.len() * dim);
    for rep in reps {
        if rep.concat().len() != dim {
            return Err(Error::DimMismatch(
                "ragged directional representations".into(),
            ));
        }
        data.extend_from_slice(rep.concat());
    }
    let matrix = Matrix::from_vec(reps.len(), dim, data)?;
    let coords = pca_project(&matrix, 2)?;

    let mut out = String::from("question_id,category,cluster,x,y\n");
    for (i, rep) in reps.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            rep.question_id,
            categories[i],
            clusters[i],
            coords.get(i, 0),
            coords.get(i, 1)
        ));
    }
    Ok(out)
}
