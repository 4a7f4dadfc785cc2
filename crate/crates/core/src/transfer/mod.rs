//! The pipelined transfer channel: protocol commands paired with resumable
//! parsers, ordered over one connection by the send/parse matrix.

mod command;
pub mod matrix;
mod protocol;
mod request;
mod sim_channel;
mod tcp;

pub use command::Command;
pub use matrix::{Matrix, MatrixTrace, SendItem};
pub use protocol::{protocol_by_id, MetaOp, Protocol, SmpProtocol};
pub use request::{
    Completion, FailReason, Outcome, Pair, ParseOutcome, ParseStep, Parser, RequestId, RequestTemplate,
    SharedSpace, StatEntry,
};
pub use sim_channel::{LineServer, SimChannel, SimChannelConfig, SimChannelStats, SmpEndpoint};
pub use tcp::{TcpChannel, TcpChannelConfig, TcpChannelStats};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("pipeline capacity must be at least 1")]
    InvalidCapacity,
    #[error("unknown protocol {0:?}")]
    UnknownProtocol(String),
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error("reply {0:?} arrived with no parser waiting")]
    Desync(String),
    #[error("i/o: {0}")]
    Io(String),
}
