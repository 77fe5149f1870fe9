//! Popularity-aware transmitter-side cache placement for multi-transmitter
//! coded caching under Zipf demand.
//!
//! The library is split into consecutive sub-libraries of popularity-ranked
//! files. The most popular block is broadcast plainly, the rest are served by
//! coded multi-transmitter delivery whose speed-up grows with how many
//! transmitters hold each file. [`kkt`] allocates that redundancy for a fixed
//! segmentation, [`search`] finds the segmentation, [`oracle`] certifies both
//! by exhaustive enumeration on small libraries.

pub mod certify;
pub mod error;
pub mod kkt;
pub mod model;
pub mod oracle;
pub mod placement;
pub mod search;
pub mod sim;

pub use error::{Constraint, Error, Result};
pub use model::{
    choose_lambda, delay_bound, expected_delay, memory_sharing_split, uniform_delay, ActiveLabel,
    DelayBound, MemorySharing, PopularityModel, RedundancyAllocation, Segmentation, Solution,
    SystemConfig,
};
