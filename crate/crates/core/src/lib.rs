//! Query composition, page extraction, the two-phase crawl loop and the
//! storage pipeline for deep-paginated search scraping.

pub mod crawler;
pub mod extract;
pub mod pipeline;
pub mod query;

pub use crawler::{CrawlConfig, CrawlError, CrawlMetrics, CrawlOptions, Crawler, HttpTransport};
pub use extract::{CursorPosition, GeoData, Tweet};
pub use pipeline::{FileStore, IngestPipeline, ItemStore, MemoryStore};
pub use query::{DateRange, QueryArguments, SearchEndpoints};
