//! Guest/host protocol: wire format, transport endpoint, training and
//! inference state machines, model shards.

pub mod guest;
pub mod host;
pub mod message;
pub mod model;
pub mod params;
pub mod predict;
pub mod transport;
pub mod wire;

pub use guest::{init_score, train_guest, Clock, EpochStats, GuestOutcome, TrainingLog, TreeStats};
pub use host::{run_host, HostOutcome};
pub use message::{Header, Message, MessageKind, PROTOCOL_VERSION};
pub use model::{GuestModel, HostModel, HostSplit, MODEL_FORMAT_VERSION};
pub use params::{CipherOptions, GossParams, Objective, TrainParams};
pub use predict::{predict_guest, serve_host_predict, Prediction};
pub use transport::{Endpoint, KindStats, MessageStats, Rank, Transport, GUEST};
pub use wire::BitVec;
