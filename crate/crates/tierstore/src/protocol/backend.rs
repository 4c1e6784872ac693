//! Backend server automaton.
//!
//! A backend server stores exactly one coded element together with its tag,
//! overwriting only on strictly newer tags, and answers helper queries by
//! projecting the stored element for the requesting edge coordinate.

use super::{ActionKind, Msg, ProcessId, StepOutput, Tag};
use crate::codec::{Element, SystemParams};

#[derive(Debug, Clone)]
pub struct BackendServer {
    params: SystemParams,
    tag: Tag,
    elem: Element,
}

impl BackendServer {
    /// Backend servers start out holding the coded element of the initial
    /// value, so the initial tag is regenerable from day one.
    pub fn new(params: SystemParams, initial_elem: Element) -> Self {
        BackendServer { params, tag: Tag::ZERO, elem: initial_elem }
    }

    pub fn stored_tag(&self) -> Tag {
        self.tag
    }

    pub fn deliver(&mut self, from: ProcessId, msg: Msg) -> StepOutput {
        let mut out = StepOutput::default();
        match msg {
            Msg::WriteCodeElem { tag, elem } => {
                if tag > self.tag {
                    self.tag = tag;
                    self.elem = elem;
                    out.action(ActionKind::StoreElem, tag);
                }
                // The ack always names the incoming tag, even when stale.
                out.send(from, Msg::AckCodeElem { tag });
            }
            Msg::QueryCodeElem { op, target } => {
                let helper = self
                    .params
                    .code
                    .helper(&self.elem, target)
                    .expect("edge coordinate is always valid for this code");
                out.send(from, Msg::SendHelperElem { op, tag: self.tag, helper });
            }
            _ => {}
        }
        out
    }
}
