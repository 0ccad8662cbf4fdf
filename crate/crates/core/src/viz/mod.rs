//! Figures: exact t-SNE projections, single-linkage dendrograms, distance
//! densities and SVG renderings.

mod density;
mod linkage;
mod svg;
mod tsne;

pub use density::{density_export, silverman_bandwidth, DensitySpec, DensityTable};
pub use linkage::{
    pairwise_distances, single_linkage, single_linkage_from_distances, Dendrogram, Merge, Metric,
};
pub use svg::{color_scale, dendrogram_svg, escape, group_colors, heatmap_svg, scatter_svg};
pub use tsne::{
    default_perplexity, joint_probabilities, tsne, ProjectedPoint, Projection2D, TsneParams,
};
