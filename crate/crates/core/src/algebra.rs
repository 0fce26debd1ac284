//! Finite groups, word problems, and solvability diagnostics.
//!
//! Groups are stored as dense Cayley tables over element indices
//! `0..order`. Table lookup keeps every downstream oracle auditable: the
//! word-problem label of a sequence is literally a fold over the table.
//!
//! Multiplication convention: `a · b` composes as functions with `b`
//! applied first, `(a · b)(x) = a(b(x))`. Word products fold left to
//! right, `labels[i] = labels[i-1] · tokens[i]`. The same orientation is
//! used by the chess reduction and the automaton constructions.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("unsupported group spec: {0}")]
    UnsupportedSpec(String),
    #[error("element index {index} out of range for group of order {order}")]
    ElementOutOfRange { index: usize, order: usize },
    #[error("empty word")]
    EmptyWord,
    #[error("unknown group id {0:?}")]
    UnknownGroupId(String),
}

/// Which family a group was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    Cyclic,
    Alternating,
    Symmetric,
    DirectProduct,
}

/// Construction request for [`build_group`].
#[derive(Debug, Clone)]
pub enum GroupSpec {
    /// Z_n, addition mod n.
    Cyclic(usize),
    /// A_n, even permutations of n points (n <= 6).
    Alternating(usize),
    /// S_n, all permutations of n points (n <= 6).
    Symmetric(usize),
    /// Direct product of two groups, componentwise.
    Product(Box<GroupSpec>, Box<GroupSpec>),
}

/// A finite group as an order-indexed Cayley table.
#[derive(Debug, Clone)]
pub struct FiniteGroup {
    order: usize,
    cayley: Vec<Vec<usize>>,
    identity: usize,
    inverses: Vec<usize>,
    names: Vec<String>,
    kind: GroupKind,
}

impl FiniteGroup {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn inverse(&self, a: usize) -> Result<usize, AlgebraError> {
        self.check(a)?;
        Ok(self.inverses[a])
    }

    pub fn name(&self, a: usize) -> &str {
        &self.names[a]
    }

    fn check(&self, a: usize) -> Result<(), AlgebraError> {
        if a >= self.order {
            return Err(AlgebraError::ElementOutOfRange { index: a, order: self.order });
        }
        Ok(())
    }

    /// Cayley-table product `a · b`.
    pub fn multiply(&self, a: usize, b: usize) -> Result<usize, AlgebraError> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.cayley[a][b])
    }

    /// Unchecked product for hot loops over known-valid indices.
    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.cayley[a][b]
    }

    /// Prefix products of a word: `labels[0] = tokens[0]`,
    /// `labels[i] = labels[i-1] · tokens[i]`.
    pub fn prefix_products(&self, tokens: &[usize]) -> Result<Vec<usize>, AlgebraError> {
        if tokens.is_empty() {
            return Err(AlgebraError::EmptyWord);
        }
        for &t in tokens {
            self.check(t)?;
        }
        let mut labels = Vec::with_capacity(tokens.len());
        let mut acc = tokens[0];
        labels.push(acc);
        for &t in &tokens[1..] {
            acc = self.cayley[acc][t];
            labels.push(acc);
        }
        Ok(labels)
    }

    /// Product of the whole word (final prefix label).
    pub fn word_product(&self, tokens: &[usize]) -> Result<usize, AlgebraError> {
        Ok(*self.prefix_products(tokens)?.last().unwrap())
    }

    /// `n` i.i.d. uniform element indices, deterministic per seed.
    pub fn sample_word(&self, n: usize, seed: u64) -> Result<Vec<usize>, AlgebraError> {
        if n == 0 {
            return Err(AlgebraError::EmptyWord);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n).map(|_| rng.gen_range(0..self.order)).collect())
    }

    /// Orders of the derived series `G, [G,G], [[G,G],[G,G]], ...` up to
    /// and including the first repeated order.
    pub fn derived_series(&self) -> Vec<usize> {
        let mut series = Vec::new();
        let mut current: Vec<usize> = (0..self.order).collect();
        series.push(current.len());
        loop {
            let next = self.commutator_subgroup(&current);
            if next.len() == current.len() {
                break;
            }
            series.push(next.len());
            if next.len() == 1 {
                break;
            }
            current = next;
        }
        series
    }

    /// True iff the derived series reaches the trivial subgroup.
    pub fn is_solvable(&self) -> bool {
        *self.derived_series().last().unwrap() == 1
    }

    /// Subgroup generated by all commutators `a b a^-1 b^-1` of elements in
    /// `sub`, computed by breadth-first closure under multiplication.
    fn commutator_subgroup(&self, sub: &[usize]) -> Vec<usize> {
        let mut gens = BTreeSet::new();
        gens.insert(self.identity);
        for &a in sub {
            for &b in sub {
                let c = self.mul(self.mul(a, b), self.mul(self.inverses[a], self.inverses[b]));
                gens.insert(c);
            }
        }
        // Closure under multiplication; inverses follow in a finite group.
        let mut members: BTreeSet<usize> = gens.clone();
        let mut frontier: Vec<usize> = members.iter().copied().collect();
        while let Some(x) = frontier.pop() {
            for &g in &gens {
                let y = self.mul(x, g);
                if members.insert(y) {
                    frontier.push(y);
                }
            }
        }
        members.into_iter().collect()
    }

    /// Exhaustive group-axiom check. Intended for tests; cubic in the order.
    pub fn check_axioms(&self) -> Result<(), String> {
        let n = self.order;
        for a in 0..n {
            for b in 0..n {
                if self.cayley[a][b] >= n {
                    return Err(format!("closure violated at ({a}, {b})"));
                }
            }
        }
        for a in 0..n {
            if self.mul(self.identity, a) != a || self.mul(a, self.identity) != a {
                return Err(format!("identity law violated at {a}"));
            }
            if self.mul(a, self.inverses[a]) != self.identity {
                return Err(format!("inverse law violated at {a}"));
            }
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if self.mul(self.mul(a, b), c) != self.mul(a, self.mul(b, c)) {
                        return Err(format!("associativity violated at ({a}, {b}, {c})"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Maximum supported degree for permutation groups.
const MAX_PERM_DEGREE: usize = 6;

/// Builds a group from a spec. Permutation groups enumerate their elements
/// in lexicographic one-line order, so the identity always has index 0.
pub fn build_group(spec: &GroupSpec) -> Result<FiniteGroup, AlgebraError> {
    match spec {
        GroupSpec::Cyclic(n) => build_cyclic(*n),
        GroupSpec::Alternating(n) => build_permutation_group(*n, true),
        GroupSpec::Symmetric(n) => build_permutation_group(*n, false),
        GroupSpec::Product(a, b) => {
            let ga = build_group(a)?;
            let gb = build_group(b)?;
            Ok(direct_product(&ga, &gb))
        }
    }
}

fn build_cyclic(n: usize) -> Result<FiniteGroup, AlgebraError> {
    if n == 0 || n > 4096 {
        return Err(AlgebraError::UnsupportedSpec(format!("Z_{n} out of supported range 1..=4096")));
    }
    let cayley: Vec<Vec<usize>> = (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect();
    let inverses = (0..n).map(|a| (n - a) % n).collect();
    let names = (0..n).map(|a| a.to_string()).collect();
    Ok(FiniteGroup { order: n, cayley, identity: 0, inverses, names, kind: GroupKind::Cyclic })
}

/// One-line permutations of `{0..degree-1}` in lexicographic order,
/// optionally restricted to even permutations.
fn build_permutation_group(degree: usize, even_only: bool) -> Result<FiniteGroup, AlgebraError> {
    let label = if even_only { "A" } else { "S" };
    if degree == 0 || degree > MAX_PERM_DEGREE {
        return Err(AlgebraError::UnsupportedSpec(format!(
            "{label}_{degree} out of supported range 1..={MAX_PERM_DEGREE}"
        )));
    }
    let mut perms = Vec::new();
    let mut current: Vec<usize> = (0..degree).collect();
    loop {
        if !even_only || perm_is_even(&current) {
            perms.push(current.clone());
        }
        if !next_lex_permutation(&mut current) {
            break;
        }
    }
    let order = perms.len();
    let index_of = |p: &[usize]| perms.binary_search_by(|q| q.as_slice().cmp(p)).unwrap();
    let mut cayley = vec![vec![0usize; order]; order];
    for (ia, a) in perms.iter().enumerate() {
        for (ib, b) in perms.iter().enumerate() {
            let prod = compose_perms(a, b);
            cayley[ia][ib] = index_of(&prod);
        }
    }
    let mut inverses = vec![0usize; order];
    for (ia, a) in perms.iter().enumerate() {
        let mut inv = vec![0usize; degree];
        for (x, &y) in a.iter().enumerate() {
            inv[y] = x;
        }
        inverses[ia] = index_of(&inv);
    }
    let names = perms.iter().map(|p| cycle_notation(p)).collect();
    Ok(FiniteGroup {
        order,
        cayley,
        identity: 0,
        inverses,
        names,
        kind: if even_only { GroupKind::Alternating } else { GroupKind::Symmetric },
    })
}

/// `(a ∘ b)(x) = a(b(x))`: apply `b` first.
pub fn compose_perms(a: &[usize], b: &[usize]) -> Vec<usize> {
    b.iter().map(|&x| a[x]).collect()
}

fn perm_is_even(p: &[usize]) -> bool {
    let mut inversions = 0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if p[i] > p[j] {
                inversions += 1;
            }
        }
    }
    inversions % 2 == 0
}

fn next_lex_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Cycle notation with 1-indexed points, e.g. `(1 2 3)`; identity is `e`.
fn cycle_notation(p: &[usize]) -> String {
    let mut seen = vec![false; p.len()];
    let mut out = String::new();
    for start in 0..p.len() {
        if seen[start] || p[start] == start {
            seen[start] = true;
            continue;
        }
        let mut cycle = Vec::new();
        let mut x = start;
        while !seen[x] {
            seen[x] = true;
            cycle.push(x + 1);
            x = p[x];
        }
        out.push('(');
        out.push_str(&cycle.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "));
        out.push(')');
    }
    if out.is_empty() {
        out.push('e');
    }
    out
}

/// Componentwise direct product; element `(a, b)` gets index `a * |B| + b`.
pub fn direct_product(ga: &FiniteGroup, gb: &FiniteGroup) -> FiniteGroup {
    let na = ga.order;
    let nb = gb.order;
    let order = na * nb;
    let idx = |a: usize, b: usize| a * nb + b;
    let mut cayley = vec![vec![0usize; order]; order];
    for a1 in 0..na {
        for b1 in 0..nb {
            for a2 in 0..na {
                for b2 in 0..nb {
                    cayley[idx(a1, b1)][idx(a2, b2)] = idx(ga.mul(a1, a2), gb.mul(b1, b2));
                }
            }
        }
    }
    let mut inverses = vec![0usize; order];
    let mut names = vec![String::new(); order];
    for a in 0..na {
        for b in 0..nb {
            inverses[idx(a, b)] = idx(ga.inverses[a], gb.inverses[b]);
            names[idx(a, b)] = format!("({}, {})", ga.names[a], gb.names[b]);
        }
    }
    FiniteGroup {
        order,
        cayley,
        identity: idx(ga.identity, gb.identity),
        inverses,
        names,
        kind: GroupKind::DirectProduct,
    }
}

/// Group ids accepted by the CLI and dataset metadata.
pub const REGISTERED_GROUP_IDS: [&str; 4] = ["Z60", "A4xZ5", "A5", "S5"];

/// Looks up one of the registered groups by its string id.
pub fn group_by_id(id: &str) -> Result<FiniteGroup, AlgebraError> {
    let spec = match id {
        "Z60" => GroupSpec::Cyclic(60),
        "A4xZ5" => {
            GroupSpec::Product(Box::new(GroupSpec::Alternating(4)), Box::new(GroupSpec::Cyclic(5)))
        }
        "A5" => GroupSpec::Alternating(5),
        "S5" => GroupSpec::Symmetric(5),
        _ => return Err(AlgebraError::UnknownGroupId(id.to_string())),
    };
    build_group(&spec)
}

/// One-line permutation vectors of `S_n` in the same lexicographic order
/// used for element indexing. Useful to oracles that need the underlying
/// mappings rather than table indices.
pub fn symmetric_permutations(degree: usize) -> Vec<Vec<usize>> {
    let mut perms = Vec::new();
    let mut current: Vec<usize> = (0..degree).collect();
    loop {
        perms.push(current.clone());
        if !next_lex_permutation(&mut current) {
            break;
        }
    }
    perms
}
