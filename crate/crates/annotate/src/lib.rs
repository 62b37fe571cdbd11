//! Annotation service: hands (user, statement) pairs with their tweet pools
//! to two primary annotators, sends disagreements to a third, and exports the
//! resulting gold labels.

pub mod clock;
pub mod error;
pub mod server;
pub mod store;

pub use clock::{Clock, ManualClock, SystemClock};
pub use error::{AnnotateError, Result};
pub use server::{router, serve, AccessConfig, AppState};
pub use store::{AnnotationRecord, AnnotationTask, ExportReport, PoolTweet, Store, TaskRole, TaskStatus, DAILY_CAP, MAX_POOL};
