//! Named parameter containers.
//!
//! Parameter structs are generic over their leaf type so the same layout
//! can hold values (`Matrix`), tape handles (`Var`), gradients or optimiser
//! moments. Visiting order is declaration order, which is also the
//! checkpoint order.

use crate::tensor::{Matrix, Tape, Var};

/// Uniform access to every leaf of a parameter tree.
pub trait Parameters<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T));

    fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.visit("", &mut |n, t| out.push((n, t)));
        out
    }

    fn count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _| n += 1);
        n
    }
}

impl<T, P: Parameters<T>> Parameters<T> for Vec<P> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        for (i, p) in self.iter().enumerate() {
            p.visit(&format!("{prefix}{i}."), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        for (i, p) in self.iter_mut().enumerate() {
            p.visit_mut(&format!("{prefix}{i}."), f);
        }
    }
}

impl<T, P: Parameters<T>> Parameters<T> for Option<P> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        if let Some(p) = self {
            p.visit(prefix, f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        if let Some(p) = self {
            p.visit_mut(prefix, f);
        }
    }
}

/// Declares a parameter struct generic over its leaf type, with `map`
/// and a [`Parameters`] impl. Fields in `plain { .. }` are copied as-is.
macro_rules! param_struct {
    (
        $(#[$meta:meta])*
        pub struct $name:ident {
            $($(#[$pm:meta])* $p:ident,)*
        }
        $(plain { $($(#[$qm:meta])* $q:ident : $qt:ty,)* })?
    ) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name<T = $crate::tensor::Matrix> {
            $($(#[$pm])* pub $p: T,)*
            $($($(#[$qm])* pub $q: $qt,)*)?
        }

        impl<T> $name<T> {
            pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> $name<U> {
                $name {
                    $($p: f(&self.$p),)*
                    $($($q: self.$q.clone(),)*)?
                }
            }
        }

        impl<T> $crate::params::Parameters<T> for $name<T> {
            fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
                $(f(format!("{prefix}{}", stringify!($p)), &self.$p);)*
            }

            fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
                $(f(format!("{prefix}{}", stringify!($p)), &mut self.$p);)*
            }
        }
    };
}

pub(crate) use param_struct;

/// Records every matrix of `params` as a differentiable tape leaf.
pub fn bind_leaf(tape: &mut Tape) -> impl FnMut(&Matrix) -> Var + '_ {
    move |m| tape.leaf(m.clone())
}

/// Records every matrix of `params` as a constant (no gradient).
pub fn bind_constant(tape: &mut Tape) -> impl FnMut(&Matrix) -> Var + '_ {
    move |m| tape.constant(m.clone())
}

/// Flattens a parameter tree into its leaves in visiting order.
pub fn flatten<P: Parameters<Matrix>>(p: &P) -> Vec<Matrix> {
    let mut out = Vec::new();
    p.visit("", &mut |_, m| out.push(m.clone()));
    out
}

/// Copy of `template` with its leaves replaced, in visiting order, by
/// `leaves`.
pub fn rebuild<P: Parameters<Matrix> + Clone>(template: &P, leaves: &[Matrix]) -> P {
    let mut out = template.clone();
    let mut it = leaves.iter();
    out.visit_mut("", &mut |name, m| {
        *m = it
            .next()
            .unwrap_or_else(|| panic!("rebuild: no leaf left for {name}"))
            .clone();
    });
    assert!(it.next().is_none(), "rebuild: more leaves than parameters");
    out
}
