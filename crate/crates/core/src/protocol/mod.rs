//! Newline-delimited client/server protocol isolating games from agents.
//!
//! Responses carry observations (frames, statuses, counters) only. Nothing
//! about a game's rules or baselines ever crosses the wire.

pub mod client;
pub mod codec;
mod message;
pub mod server;

pub use codec::ProtocolError;
pub use message::{
    decode_message, decode_request, decode_response, encode_message, encode_request, encode_response,
    Message, Request, Response, WireError, WirePrediction,
};
pub use crate::env::Counters;
