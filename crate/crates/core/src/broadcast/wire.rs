//! Broadcast messages and their byte encoding.

use std::sync::Arc;

use thiserror::Error;

use crate::digest::{digest_bytes, mix_words};
use crate::sim::{Message, ProcessId};

/// A broadcast body with a canonical byte encoding.
pub trait Payload: Clone + std::fmt::Debug + Send + Sync + 'static {
    fn encode(&self, out: &mut Vec<u8>);
    fn decode(bytes: &[u8]) -> Result<Self, WireError>;

    /// Identity of the body: digest of its encoding.
    fn payload_digest(&self) -> u64 {
        let mut buf = Vec::new();
        self.encode(&mut buf);
        digest_bytes(&buf)
    }
}

impl Payload for Vec<u8> {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self);
    }

    fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        Ok(bytes.to_vec())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated input: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("unknown message tag {0}")]
    UnknownTag(u8),
    #[error("malformed body: {0}")]
    Malformed(&'static str),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RbKind {
    Init,
    Echo,
    Ready,
}

impl RbKind {
    fn tag(self) -> u8 {
        match self {
            RbKind::Init => 0,
            RbKind::Echo => 1,
            RbKind::Ready => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, WireError> {
        match tag {
            0 => Ok(RbKind::Init),
            1 => Ok(RbKind::Echo),
            2 => Ok(RbKind::Ready),
            t => Err(WireError::UnknownTag(t)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RbMessage<B> {
    pub kind: RbKind,
    pub origin: ProcessId,
    pub seq: u64,
    pub body: Arc<B>,
    /// Claimed digest of `body`; receivers verify it before trusting the body.
    pub digest: u64,
}

impl<B: Payload> RbMessage<B> {
    pub fn new(kind: RbKind, origin: ProcessId, seq: u64, body: Arc<B>) -> Self {
        let digest = body.payload_digest();
        RbMessage {
            kind,
            origin,
            seq,
            body,
            digest,
        }
    }

    /// Same instance and body, different kind.
    pub fn with_kind(&self, kind: RbKind) -> Self {
        RbMessage {
            kind,
            ..self.clone()
        }
    }

    /// `tag (1) | origin (4) | seq (8) | body length (4) | body`, big-endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        self.body.encode(&mut body);
        let mut out = Vec::with_capacity(17 + body.len());
        out.push(self.kind.tag());
        out.extend_from_slice(&self.origin.0.to_be_bytes());
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader(bytes);
        let kind = RbKind::from_tag(r.u8()?)?;
        let origin = ProcessId(r.u32()?);
        let seq = r.u64()?;
        let len = r.u32()? as usize;
        let body = B::decode(r.take(len)?)?;
        if !r.0.is_empty() {
            return Err(WireError::Trailing(r.0.len()));
        }
        Ok(RbMessage::new(kind, origin, seq, Arc::new(body)))
    }
}

impl<B: Payload> Message for RbMessage<B> {
    fn digest(&self) -> u64 {
        mix_words(&[
            self.kind.tag() as u64,
            self.origin.0 as u64,
            self.seq,
            self.digest,
        ])
    }
}

/// Cursor over a byte slice for the big-endian decoders in this crate.
pub struct Reader<'a>(pub &'a [u8]);

impl<'a> Reader<'a> {
    pub fn take(&mut self, k: usize) -> Result<&'a [u8], WireError> {
        if self.0.len() < k {
            return Err(WireError::Truncated {
                needed: k - self.0.len(),
            });
        }
        let (head, tail) = self.0.split_at(k);
        self.0 = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let m = RbMessage::new(RbKind::Ready, ProcessId(3), 7, Arc::new(b"hello".to_vec()));
        let bytes = m.encode();
        assert_eq!(bytes[0], 2);
        assert_eq!(bytes.len(), 17 + 5);
        let back = RbMessage::<Vec<u8>>::decode(&bytes).unwrap();
        assert_eq!(back.kind, RbKind::Ready);
        assert_eq!(back.origin, ProcessId(3));
        assert_eq!(back.seq, 7);
        assert_eq!(*back.body, b"hello".to_vec());
        assert_eq!(back.digest, m.digest);
    }

    #[test]
    fn rejects_garbage() {
        assert_eq!(
            RbMessage::<Vec<u8>>::decode(&[9]).unwrap_err(),
            WireError::UnknownTag(9)
        );
        assert!(matches!(
            RbMessage::<Vec<u8>>::decode(&[0, 0, 0]).unwrap_err(),
            WireError::Truncated { .. }
        ));
        let mut bytes = RbMessage::new(RbKind::Init, ProcessId(0), 1, Arc::new(vec![1u8])).encode();
        bytes.push(0);
        // The length prefix covers one byte; the extra byte is trailing.
        assert_eq!(
            RbMessage::<Vec<u8>>::decode(&bytes).unwrap_err(),
            WireError::Trailing(1)
        );
    }
}
