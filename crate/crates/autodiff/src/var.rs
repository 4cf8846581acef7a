use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use crate::float::Float;

/// Context handed to an op's backward rule.
///
/// When gradients are requested without graph construction, `inputs`,
/// `output` and `grad` are detached, so every op issued by the rule yields a
/// constant and nothing is recorded.
pub(crate) struct BackwardCtx<'a, T: Float> {
    pub inputs: &'a [Var<T>],
    pub output: &'a Var<T>,
    pub grad: &'a Var<T>,
    /// Whether input `i` of the recorded op wants a gradient.
    pub needs: &'a [bool],
}

impl<T: Float> BackwardCtx<'_, T> {
    pub fn needs(&self, i: usize) -> bool {
        self.needs[i]
    }
}

pub(crate) trait Backward<T: Float> {
    fn name(&self) -> &'static str;

    /// One entry per input. `None` means "no gradient flows to this input".
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Var<T>>>;
}

struct GradFn<T: Float> {
    op: Box<dyn Backward<T>>,
    inputs: Vec<Var<T>>,
}

struct Node<T: Float> {
    data: Rc<Vec<T>>,
    shape: Vec<usize>,
    requires_grad: bool,
    grad_fn: Option<GradFn<T>>,
}

/// A node in a dynamically built computation graph.
///
/// Cloning a `Var` is cheap and shares the node. Values are immutable.
pub struct Var<T: Float>(Rc<Node<T>>);

impl<T: Float> Clone for Var<T> {
    fn clone(&self) -> Self {
        Var(Rc::clone(&self.0))
    }
}

impl<T: Float> fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = self.0.grad_fn.as_ref().map(|g| g.op.name()).unwrap_or("leaf");
        write!(f, "Var(shape={:?}, op={}, requires_grad={})", self.0.shape, op, self.0.requires_grad)
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Float> Var<T> {
    fn leaf(data: Vec<T>, shape: Vec<usize>, requires_grad: bool) -> Self {
        assert_eq!(
            data.len(),
            numel(&shape),
            "data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Var(Rc::new(Node { data: Rc::new(data), shape, requires_grad, grad_fn: None }))
    }

    /// Trainable leaf: gradients can be taken with respect to it.
    pub fn param(data: Vec<T>, shape: &[usize]) -> Self {
        Self::leaf(data, shape.to_vec(), true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(data: Vec<T>, shape: &[usize]) -> Self {
        Self::leaf(data, shape.to_vec(), false)
    }

    pub fn scalar(value: T) -> Self {
        Self::leaf(vec![value], Vec::new(), false)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::leaf(vec![value; numel(shape)], shape.to_vec(), false)
    }

    pub(crate) fn from_op(
        data: Vec<T>,
        shape: Vec<usize>,
        op: impl Backward<T> + 'static,
        inputs: Vec<Var<T>>,
    ) -> Self {
        Self::from_shared_op(Rc::new(data), shape, op, inputs)
    }

    pub(crate) fn from_shared_op(
        data: Rc<Vec<T>>,
        shape: Vec<usize>,
        op: impl Backward<T> + 'static,
        inputs: Vec<Var<T>>,
    ) -> Self {
        debug_assert_eq!(data.len(), numel(&shape));
        let requires_grad = inputs.iter().any(|v| v.requires_grad());
        let grad_fn = requires_grad.then(|| GradFn { op: Box::new(op), inputs });
        Var(Rc::new(Node { data, shape, requires_grad, grad_fn }))
    }

    pub(crate) fn shared_data(&self) -> Rc<Vec<T>> {
        Rc::clone(&self.0.data)
    }

    pub fn data(&self) -> &[T] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.as_ref().clone()
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Self {
        Var(Rc::new(Node {
            data: self.shared_data(),
            shape: self.0.shape.clone(),
            requires_grad: false,
            grad_fn: None,
        }))
    }

    fn key(&self) -> *const () {
        Rc::as_ptr(&self.0) as *const ()
    }

    pub fn same_node(&self, other: &Var<T>) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }
}

/// Gradients of `output` with respect to each of `wrt`.
///
/// A non-scalar `output` is implicitly summed. Inputs that `output` does not
/// depend on get a zero gradient. With `create_graph` the returned gradients
/// are themselves differentiable, which is what second-order penalties need.
pub fn grad<T: Float>(output: &Var<T>, wrt: &[&Var<T>], create_graph: bool) -> Vec<Var<T>> {
    let seed = Var::ones(output.shape());
    grad_with_seed(output, &seed, wrt, create_graph)
}

/// Vector-Jacobian product: gradients of `<output, seed>` with respect to `wrt`.
pub fn grad_with_seed<T: Float>(
    output: &Var<T>,
    seed: &Var<T>,
    wrt: &[&Var<T>],
    create_graph: bool,
) -> Vec<Var<T>> {
    assert_eq!(output.shape(), seed.shape(), "seed shape must match output shape");
    let order = topo_order(output);
    let mut grads: HashMap<*const (), Var<T>> = HashMap::new();
    if output.requires_grad() {
        let seed = if create_graph { seed.clone() } else { seed.detach() };
        grads.insert(output.key(), seed);
    }
    let wanted: Vec<*const ()> = wrt.iter().map(|v| v.key()).collect();

    for node in order.iter().rev() {
        let Some(gf) = node.0.grad_fn.as_ref() else { continue };
        // Leaves we still need are kept; interior grads are dropped once used.
        let g = if wanted.contains(&node.key()) {
            match grads.get(&node.key()) {
                Some(g) => g.clone(),
                None => continue,
            }
        } else {
            match grads.remove(&node.key()) {
                Some(g) => g,
                None => continue,
            }
        };
        let needs: Vec<bool> = gf.inputs.iter().map(Var::requires_grad).collect();
        let input_grads = if create_graph {
            gf.op.backward(&BackwardCtx { inputs: &gf.inputs, output: node, grad: &g, needs: &needs })
        } else {
            let inputs: Vec<Var<T>> = gf.inputs.iter().map(Var::detach).collect();
            let out = node.detach();
            let g = g.detach();
            gf.op.backward(&BackwardCtx { inputs: &inputs, output: &out, grad: &g, needs: &needs })
        };
        debug_assert_eq!(input_grads.len(), gf.inputs.len(), "op {}", gf.op.name());
        for (input, ig) in gf.inputs.iter().zip(input_grads) {
            let Some(ig) = ig else { continue };
            if !input.requires_grad() {
                continue;
            }
            assert_eq!(
                ig.shape(),
                input.shape(),
                "backward of {} produced wrong gradient shape",
                gf.op.name()
            );
            let ig = if create_graph { ig } else { ig.detach() };
            match grads.remove(&input.key()) {
                Some(prev) => {
                    let sum = &prev + &ig;
                    grads.insert(input.key(), if create_graph { sum } else { sum.detach() });
                }
                None => {
                    grads.insert(input.key(), ig);
                }
            }
        }
    }

    wrt.iter()
        .map(|v| grads.get(&v.key()).cloned().unwrap_or_else(|| Var::zeros(v.shape())))
        .collect()
}

/// Post-order over nodes that require grad, iterative to survive deep graphs.
fn topo_order<T: Float>(root: &Var<T>) -> Vec<Var<T>> {
    let mut order = Vec::new();
    if !root.requires_grad() {
        return order;
    }
    let mut visited: std::collections::HashSet<*const ()> = std::collections::HashSet::new();
    let mut stack: Vec<(Var<T>, bool)> = vec![(root.clone(), false)];
    while let Some((v, expanded)) = stack.pop() {
        if expanded {
            order.push(v);
            continue;
        }
        if !visited.insert(v.key()) {
            continue;
        }
        stack.push((v.clone(), true));
        if let Some(gf) = v.0.grad_fn.as_ref() {
            for input in &gf.inputs {
                if input.requires_grad() && !visited.contains(&input.key()) {
                    stack.push((input.clone(), false));
                }
            }
        }
    }
    order
}
