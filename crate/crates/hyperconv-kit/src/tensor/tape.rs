use super::{Scalar, Tensor};
use crate::error::{Error, Result};
use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

/// Backward rule of a recorded primitive: receives the gradient flowing
/// into the node and emits one gradient vector per parent via the sink
/// `(parent_index, grad)`.
pub(crate) type BackFn<T> = Box<dyn Fn(&[T], &mut dyn FnMut(usize, Vec<T>))>;

struct Node<T: Scalar> {
    shape: Vec<usize>,
    parents: Vec<usize>,
    backward: Option<BackFn<T>>,
}

struct TapeInner<T: Scalar> {
    nodes: Vec<Node<T>>,
}

/// Ordered record of primitive applications for one forward pass.
///
/// Topological order holds by construction: a node is pushed only after
/// its parents. One tape per forward pass; tapes are single-threaded.
pub struct Tape<T: Scalar> {
    inner: Rc<RefCell<TapeInner<T>>>,
}

impl<T: Scalar> Clone for Tape<T> {
    fn clone(&self) -> Self {
        Tape {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

pub(crate) struct NodeRef<T: Scalar> {
    pub(crate) tape: Tape<T>,
    pub(crate) id: usize,
}

impl<T: Scalar> Clone for NodeRef<T> {
    fn clone(&self) -> Self {
        NodeRef {
            tape: self.tape.clone(),
            id: self.id,
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner { nodes: Vec::new() })),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn same_tape(&self, other: &Tape<T>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Registers a differentiable leaf. The returned tensor shares the
    /// input's data and will receive a gradient in [`Tape::backward`].
    pub fn leaf(&self, t: &Tensor<T>) -> Tensor<T> {
        let id = {
            let mut inner = self.inner.borrow_mut();
            inner.nodes.push(Node {
                shape: t.shape().to_vec(),
                parents: Vec::new(),
                backward: None,
            });
            inner.nodes.len() - 1
        };
        t.detach().with_node(NodeRef {
            tape: self.clone(),
            id,
        })
    }

    pub(crate) fn record(
        &self,
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<NodeRef<T>>,
        backward: BackFn<T>,
    ) -> Tensor<T> {
        debug_assert!(parents.iter().all(|p| self.same_tape(&p.tape)));
        let parent_ids: Vec<usize> = parents.iter().map(|p| p.id).collect();
        let id = {
            let mut inner = self.inner.borrow_mut();
            inner.nodes.push(Node {
                shape: shape.clone(),
                parents: parent_ids,
                backward: Some(backward),
            });
            inner.nodes.len() - 1
        };
        Tensor::from_vec(data, &shape)
            .expect("record: data length must match shape")
            .with_node(NodeRef {
                tape: self.clone(),
                id,
            })
    }

    /// Single tape shared by a set of tensors, if any of them is recorded.
    /// Errors if two tensors live on different tapes.
    pub(crate) fn of(tensors: &[&Tensor<T>], op: &'static str) -> Result<Option<Tape<T>>> {
        let mut found: Option<Tape<T>> = None;
        for t in tensors {
            if let Some(node) = &t.node {
                match &found {
                    None => found = Some(node.tape.clone()),
                    Some(tape) => {
                        if !tape.same_tape(&node.tape) {
                            return Err(Error::Tape(format!(
                                "{op}: inputs recorded on different tapes"
                            )));
                        }
                    }
                }
            }
        }
        Ok(found)
    }

    /// Reverse sweep from a scalar loss. Returns one gradient per node
    /// reachable from the loss; query with [`Gradients::get`].
    pub fn backward(&self, loss: &Tensor<T>) -> Result<Gradients<T>> {
        let loss_node = loss
            .node
            .as_ref()
            .ok_or_else(|| Error::Tape("backward: loss is not recorded on a tape".into()))?;
        if !self.same_tape(&loss_node.tape) {
            return Err(Error::Tape("backward: loss lives on a different tape".into()));
        }
        if loss.numel() != 1 {
            return Err(Error::Tape(format!(
                "backward: loss must be scalar, got shape {:?}",
                loss.shape()
            )));
        }

        let inner = self.inner.borrow();
        let n = inner.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        grads[loss_node.id] = Some(vec![T::one()]);

        for id in (0..n).rev() {
            let Some(grad_out) = grads[id].take() else {
                continue;
            };
            let node = &inner.nodes[id];
            if let Some(backward) = &node.backward {
                let parents = node.parents.clone();
                let mut sink = |pi: usize, g: Vec<T>| {
                    let pid = parents[pi];
                    let pshape: usize = inner.nodes[pid].shape.iter().product();
                    debug_assert_eq!(g.len(), pshape, "backward grad length mismatch");
                    match &mut grads[pid] {
                        Some(acc) => {
                            for (a, b) in acc.iter_mut().zip(g.iter()) {
                                *a = *a + *b;
                            }
                        }
                        None => grads[pid] = Some(g),
                    }
                };
                backward(&grad_out, &mut sink);
            } else {
                // leaf: keep its gradient
                grads[id] = Some(grad_out);
            }
        }

        let shapes: Vec<Vec<usize>> = inner.nodes.iter().map(|n| n.shape.clone()).collect();
        Ok(Gradients {
            tape: self.clone(),
            grads,
            shapes,
        })
    }
}

/// Result of a reverse sweep: gradient per reachable node.
pub struct Gradients<T: Scalar> {
    tape: Tape<T>,
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss w.r.t. a recorded tensor, if it received one.
    pub fn get(&self, t: &Tensor<T>) -> Option<Tensor<T>> {
        let node = t.node.as_ref()?;
        if !Rc::ptr_eq(&self.tape.inner, &node.tape.inner) {
            return None;
        }
        let g = self.grads.get(node.id)?.as_ref()?;
        Some(Tensor {
            shape: self.shapes[node.id].clone(),
            data: Arc::new(g.clone()),
            node: None,
        })
    }
}
