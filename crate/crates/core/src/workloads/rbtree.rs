//! Red-black tree over a node arena in shared memory, driven by per-thread
//! streams of insert, lookup and delete operations. Each whole operation
//! runs inside region 0.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layout::{RbLayout, RB_COLOR, RB_KEY, RB_LEFT, RB_PARENT, RB_RIGHT};
use super::program::{ScriptCx, Step, ThreadProgram};
use crate::config::SimConfig;
use crate::memhier::{AddressMap, Hierarchy};
use crate::{Addr, RegionId};

pub const BLACK: u64 = 0;
pub const RED: u64 = 1;

/// Word-granular memory seen by the tree code.
pub trait Cells {
    fn get(&mut self, addr: Addr) -> Step<u64>;
    fn set(&mut self, addr: Addr, v: u64) -> Step<()>;
}

impl Cells for ScriptCx<'_> {
    fn get(&mut self, addr: Addr) -> Step<u64> {
        self.read_u64(addr)
    }
    fn set(&mut self, addr: Addr, v: u64) -> Step<()> {
        self.write_u64(addr, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbOp {
    Insert(u64),
    Lookup(u64),
    Delete(u64),
}

impl fmt::Display for RbOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RbOp::Insert(k) => write!(f, "insert {k}"),
            RbOp::Lookup(k) => write!(f, "lookup {k}"),
            RbOp::Delete(k) => write!(f, "delete {k}"),
        }
    }
}

/// Tree operations against an arena, one word access at a time.
pub struct Tree<'m, M: Cells + ?Sized> {
    pub mem: &'m mut M,
    pub layout: RbLayout,
}

macro_rules! field {
    ($get:ident, $set:ident, $off:expr) => {
        fn $get(&mut self, n: u64) -> Step<u64> {
            let a = self.layout.node(n) + $off;
            self.mem.get(a)
        }
        fn $set(&mut self, n: u64, v: u64) -> Step<()> {
            let a = self.layout.node(n) + $off;
            self.mem.set(a, v)
        }
    };
}

impl<M: Cells + ?Sized> Tree<'_, M> {
    field!(key, set_key, RB_KEY);
    field!(raw_color, set_color_raw, RB_COLOR);
    field!(left, set_left, RB_LEFT);
    field!(right, set_right, RB_RIGHT);
    field!(parent, set_parent, RB_PARENT);

    fn color(&mut self, n: u64) -> Step<u64> {
        if n == 0 {
            Ok(BLACK)
        } else {
            self.raw_color(n)
        }
    }

    fn set_color(&mut self, n: u64, c: u64) -> Step<()> {
        self.set_color_raw(n, c)
    }

    fn root(&mut self) -> Step<u64> {
        self.mem.get(self.layout.root_cell())
    }

    fn set_root(&mut self, n: u64) -> Step<()> {
        self.mem.set(self.layout.root_cell(), n)
    }

    fn search(&mut self, key: u64) -> Step<u64> {
        let mut x = self.root()?;
        while x != 0 {
            let k = self.key(x)?;
            if key == k {
                return Ok(x);
            }
            x = if key < k {
                self.left(x)?
            } else {
                self.right(x)?
            };
        }
        Ok(0)
    }

    fn alloc(&mut self, thread: usize) -> Step<u64> {
        let free = self.layout.free_cell(thread);
        let head = self.mem.get(free)?;
        if head != 0 {
            let next = self.left(head)?;
            self.mem.set(free, next)?;
            return Ok(head);
        }
        let bump = self.layout.bump_cell(thread);
        let z = self.mem.get(bump)?;
        self.mem.set(bump, z + 1)?;
        Ok(z)
    }

    fn release(&mut self, thread: usize, z: u64) -> Step<()> {
        let free = self.layout.free_cell(thread);
        let head = self.mem.get(free)?;
        self.set_left(z, head)?;
        self.mem.set(free, z)
    }

    /// Replaces `old` with `new` in `parent`'s child links (or the root).
    fn relink(&mut self, parent: u64, old: u64, new: u64) -> Step<()> {
        if parent == 0 {
            self.set_root(new)
        } else if self.left(parent)? == old {
            self.set_left(parent, new)
        } else {
            self.set_right(parent, new)
        }
    }

    fn rotate_left(&mut self, x: u64) -> Step<()> {
        let y = self.right(x)?;
        let yl = self.left(y)?;
        self.set_right(x, yl)?;
        if yl != 0 {
            self.set_parent(yl, x)?;
        }
        let xp = self.parent(x)?;
        self.set_parent(y, xp)?;
        self.relink(xp, x, y)?;
        self.set_left(y, x)?;
        self.set_parent(x, y)
    }

    fn rotate_right(&mut self, x: u64) -> Step<()> {
        let y = self.left(x)?;
        let yr = self.right(y)?;
        self.set_left(x, yr)?;
        if yr != 0 {
            self.set_parent(yr, x)?;
        }
        let xp = self.parent(x)?;
        self.set_parent(y, xp)?;
        self.relink(xp, x, y)?;
        self.set_right(y, x)?;
        self.set_parent(x, y)
    }

    /// Returns false if the key was already present.
    pub fn insert(&mut self, thread: usize, key: u64) -> Step<bool> {
        let mut y = 0;
        let mut go_left = false;
        let mut x = self.root()?;
        while x != 0 {
            y = x;
            let k = self.key(x)?;
            if key == k {
                return Ok(false);
            }
            go_left = key < k;
            x = if go_left {
                self.left(x)?
            } else {
                self.right(x)?
            };
        }
        let z = self.alloc(thread)?;
        self.set_key(z, key)?;
        self.set_left(z, 0)?;
        self.set_right(z, 0)?;
        self.set_parent(z, y)?;
        self.set_color(z, RED)?;
        if y == 0 {
            self.set_root(z)?;
        } else if go_left {
            self.set_left(y, z)?;
        } else {
            self.set_right(y, z)?;
        }
        self.insert_fixup(z)?;
        Ok(true)
    }

    fn insert_fixup(&mut self, mut z: u64) -> Step<()> {
        loop {
            let p = self.parent(z)?;
            if p == 0 || self.color(p)? != RED {
                break;
            }
            // A red parent is never the root, so g exists.
            let g = self.parent(p)?;
            let p_is_left = self.left(g)? == p;
            let u = if p_is_left {
                self.right(g)?
            } else {
                self.left(g)?
            };
            if self.color(u)? == RED {
                self.set_color(p, BLACK)?;
                self.set_color(u, BLACK)?;
                self.set_color(g, RED)?;
                z = g;
                continue;
            }
            let mut p = p;
            if p_is_left {
                if self.right(p)? == z {
                    z = p;
                    self.rotate_left(z)?;
                    p = self.parent(z)?;
                }
                self.set_color(p, BLACK)?;
                self.set_color(g, RED)?;
                self.rotate_right(g)?;
            } else {
                if self.left(p)? == z {
                    z = p;
                    self.rotate_right(z)?;
                    p = self.parent(z)?;
                }
                self.set_color(p, BLACK)?;
                self.set_color(g, RED)?;
                self.rotate_left(g)?;
            }
        }
        let r = self.root()?;
        if self.color(r)? == RED {
            self.set_color(r, BLACK)?;
        }
        Ok(())
    }

    pub fn lookup(&mut self, key: u64) -> Step<bool> {
        Ok(self.search(key)? != 0)
    }

    /// Returns false if the key was absent.
    pub fn delete(&mut self, thread: usize, key: u64) -> Step<bool> {
        let z = self.search(key)?;
        if z == 0 {
            return Ok(false);
        }
        let zl = self.left(z)?;
        let zr = self.right(z)?;
        let zp = self.parent(z)?;
        let removed_color;
        let x;
        let xp;
        if zl == 0 || zr == 0 {
            removed_color = self.color(z)?;
            x = if zl == 0 { zr } else { zl };
            xp = zp;
            self.relink(zp, z, x)?;
            if x != 0 {
                self.set_parent(x, zp)?;
            }
        } else {
            let mut y = zr;
            loop {
                let l = self.left(y)?;
                if l == 0 {
                    break;
                }
                y = l;
            }
            removed_color = self.color(y)?;
            x = self.right(y)?;
            if y == zr {
                xp = y;
            } else {
                xp = self.parent(y)?;
                self.set_left(xp, x)?;
                if x != 0 {
                    self.set_parent(x, xp)?;
                }
                self.set_right(y, zr)?;
                self.set_parent(zr, y)?;
            }
            self.relink(zp, z, y)?;
            self.set_parent(y, zp)?;
            self.set_left(y, zl)?;
            self.set_parent(zl, y)?;
            let zc = self.color(z)?;
            self.set_color(y, zc)?;
        }
        if removed_color == BLACK {
            self.delete_fixup(x, xp)?;
        }
        self.release(thread, z)?;
        Ok(true)
    }

    fn delete_fixup(&mut self, mut x: u64, mut xp: u64) -> Step<()> {
        while xp != 0 && self.color(x)? == BLACK {
            if self.left(xp)? == x {
                let mut w = self.right(xp)?;
                if self.color(w)? == RED {
                    self.set_color(w, BLACK)?;
                    self.set_color(xp, RED)?;
                    self.rotate_left(xp)?;
                    w = self.right(xp)?;
                }
                let wl = self.left(w)?;
                let wr = self.right(w)?;
                if self.color(wl)? == BLACK && self.color(wr)? == BLACK {
                    self.set_color(w, RED)?;
                    x = xp;
                    xp = self.parent(x)?;
                } else {
                    if self.color(wr)? == BLACK {
                        self.set_color(wl, BLACK)?;
                        self.set_color(w, RED)?;
                        self.rotate_right(w)?;
                        w = self.right(xp)?;
                    }
                    let c = self.color(xp)?;
                    self.set_color(w, c)?;
                    self.set_color(xp, BLACK)?;
                    let wr = self.right(w)?;
                    if wr != 0 {
                        self.set_color(wr, BLACK)?;
                    }
                    self.rotate_left(xp)?;
                    x = self.root()?;
                    xp = 0;
                }
            } else {
                let mut w = self.left(xp)?;
                if self.color(w)? == RED {
                    self.set_color(w, BLACK)?;
                    self.set_color(xp, RED)?;
                    self.rotate_right(xp)?;
                    w = self.left(xp)?;
                }
                let wl = self.left(w)?;
                let wr = self.right(w)?;
                if self.color(wl)? == BLACK && self.color(wr)? == BLACK {
                    self.set_color(w, RED)?;
                    x = xp;
                    xp = self.parent(x)?;
                } else {
                    if self.color(wl)? == BLACK {
                        self.set_color(wr, BLACK)?;
                        self.set_color(w, RED)?;
                        self.rotate_left(w)?;
                        w = self.left(xp)?;
                    }
                    let c = self.color(xp)?;
                    self.set_color(w, c)?;
                    self.set_color(xp, BLACK)?;
                    let wl = self.left(w)?;
                    if wl != 0 {
                        self.set_color(wl, BLACK)?;
                    }
                    self.rotate_right(xp)?;
                    x = self.root()?;
                    xp = 0;
                }
            }
        }
        if x != 0 && self.color(x)? == RED {
            self.set_color(x, BLACK)?;
        }
        Ok(())
    }

    pub fn apply(&mut self, thread: usize, op: RbOp) -> Step<bool> {
        match op {
            RbOp::Insert(k) => self.insert(thread, k),
            RbOp::Lookup(k) => self.lookup(k),
            RbOp::Delete(k) => self.delete(thread, k),
        }
    }
}

/// Operation stream of one thread and the keys it leaves in the tree.
/// Keys are partitioned by thread (`key % threads == thread`), so the
/// final key set does not depend on the interleaving.
pub fn thread_ops(cfg: &SimConfig, seed: u64, thread: usize) -> (Vec<RbOp>, BTreeSet<u64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(thread as u64);
    let threads = cfg.num_cores as u64;
    let slots = cfg.rbtree.key_range / threads;
    let draw = |rng: &mut ChaCha8Rng| thread as u64 + threads * rng.gen_range(0..slots);
    let mut live = BTreeSet::new();
    let mut ops = Vec::with_capacity(cfg.rbtree.ops_per_thread as usize);
    for _ in 0..cfg.rbtree.ops_per_thread {
        let roll = rng.gen_range(0..100u32);
        let op = if roll < 60 {
            let k = draw(&mut rng);
            live.insert(k);
            RbOp::Insert(k)
        } else if roll < 90 {
            RbOp::Lookup(draw(&mut rng))
        } else if live.is_empty() {
            RbOp::Delete(draw(&mut rng))
        } else {
            let i = rng.gen_range(0..live.len());
            let k = *live.iter().nth(i).expect("in range");
            live.remove(&k);
            RbOp::Delete(k)
        };
        ops.push(op);
    }
    (ops, live)
}

/// Programs, initial cell values, and the expected final key set.
pub fn build_rbtree(
    cfg: &SimConfig,
    seed: u64,
) -> (Vec<ThreadProgram>, Vec<(Addr, u64)>, BTreeSet<u64>) {
    let layout = RbLayout::new(cfg, &AddressMap::new(cfg));
    let mut expected = BTreeSet::new();
    let mut init = Vec::new();
    let mut programs = Vec::new();
    for t in 0..cfg.num_cores {
        init.push((layout.bump_cell(t), layout.first_node(t)));
        let (ops, live) = thread_ops(cfg, seed, t);
        expected.extend(live);
        let mut p = ThreadProgram::new();
        for op in ops {
            p.enter(RegionId(0))
                .script(format!("{op}"), move |cx| {
                    Tree { mem: cx, layout }.apply(t, op).map(|_| ())
                })
                .exit(RegionId(0));
        }
        programs.push(p);
    }
    (programs, init, expected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbProperty {
    Structure,
    SearchOrder,
    RootBlack,
    RedRed,
    BlackHeight,
    KeySet,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{property:?} violated at node {node}: {detail}")]
pub struct RbViolation {
    pub property: RbProperty,
    pub node: u64,
    pub detail: String,
}

struct Walker<'a, F> {
    read: F,
    layout: &'a RbLayout,
    visited: u64,
    keys: Vec<u64>,
}

impl<F: Fn(Addr) -> Option<u64>> Walker<'_, F> {
    fn word(&self, node: u64, off: u64) -> Result<u64, RbViolation> {
        (self.read)(self.layout.node(node) + off).ok_or_else(|| RbViolation {
            property: RbProperty::Structure,
            node,
            detail: "node outside memory".into(),
        })
    }

    /// Black height of the subtree at `n`, counting the null leaves.
    fn walk(
        &mut self,
        n: u64,
        parent: u64,
        lo: Option<u64>,
        hi: Option<u64>,
    ) -> Result<u32, RbViolation> {
        if n == 0 {
            return Ok(1);
        }
        let bad = |property, detail: String| RbViolation {
            property,
            node: n,
            detail,
        };
        self.visited += 1;
        if n > self.layout.capacity() || self.visited > self.layout.capacity() {
            return Err(bad(
                RbProperty::Structure,
                "index out of arena or cycle".into(),
            ));
        }
        let p = self.word(n, RB_PARENT)?;
        if p != parent {
            return Err(bad(
                RbProperty::Structure,
                format!("parent link {p}, expected {parent}"),
            ));
        }
        let key = self.word(n, RB_KEY)?;
        if lo.is_some_and(|l| key <= l) || hi.is_some_and(|h| key >= h) {
            return Err(bad(
                RbProperty::SearchOrder,
                format!("key {key} outside ({lo:?}, {hi:?})"),
            ));
        }
        let color = self.word(n, RB_COLOR)?;
        if color > RED {
            return Err(bad(RbProperty::Structure, format!("color word {color}")));
        }
        let (l, r) = (self.word(n, RB_LEFT)?, self.word(n, RB_RIGHT)?);
        if color == RED {
            for c in [l, r] {
                if c != 0 && self.word(c, RB_COLOR)? == RED {
                    return Err(bad(RbProperty::RedRed, format!("red child {c}")));
                }
            }
        }
        let lh = self.walk(l, n, lo, Some(key))?;
        self.keys.push(key);
        let rh = self.walk(r, n, Some(key), hi)?;
        if lh != rh {
            return Err(bad(
                RbProperty::BlackHeight,
                format!("left {lh}, right {rh}"),
            ));
        }
        Ok(lh + u32::from(color == BLACK))
    }
}

/// Checks the arena through an arbitrary word reader. Returns the number of
/// keys in the tree.
pub fn rb_verify_with<F>(
    read: F,
    layout: &RbLayout,
    expected: &BTreeSet<u64>,
) -> Result<usize, RbViolation>
where
    F: Fn(Addr) -> Option<u64>,
{
    let root = read(layout.root_cell()).ok_or(RbViolation {
        property: RbProperty::Structure,
        node: 0,
        detail: "root cell outside memory".into(),
    })?;
    let mut w = Walker {
        read,
        layout,
        visited: 0,
        keys: Vec::new(),
    };
    if root != 0 && w.word(root, RB_COLOR)? != BLACK {
        return Err(RbViolation {
            property: RbProperty::RootBlack,
            node: root,
            detail: "root is red".into(),
        });
    }
    w.walk(root, 0, None, None)?;
    let got: BTreeSet<u64> = w.keys.iter().copied().collect();
    if &got != expected {
        let missing = expected.difference(&got).next();
        let extra = got.difference(expected).next();
        return Err(RbViolation {
            property: RbProperty::KeySet,
            node: 0,
            detail: format!("first missing key {missing:?}, first unexpected key {extra:?}"),
        });
    }
    Ok(got.len())
}

pub fn rb_verify(
    hier: &Hierarchy,
    layout: &RbLayout,
    expected: &BTreeSet<u64>,
) -> Result<usize, RbViolation> {
    rb_verify_with(
        |a| {
            hier.peek(a, 8)
                .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
        },
        layout,
        expected,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;
    use alloc::collections::BTreeMap;

    #[derive(Default)]
    struct Flat(BTreeMap<Addr, u64>);

    impl Cells for Flat {
        fn get(&mut self, a: Addr) -> Step<u64> {
            Ok(self.0.get(&a).copied().unwrap_or(0))
        }
        fn set(&mut self, a: Addr, v: u64) -> Step<()> {
            self.0.insert(a, v);
            Ok(())
        }
    }

    fn setup(threads: usize, per_thread: u32) -> (RbLayout, Flat) {
        let mut cfg = default_config();
        cfg.num_cores = threads;
        cfg.rbtree.ops_per_thread = per_thread;
        let layout = RbLayout::new(&cfg, &AddressMap::new(&cfg));
        let mut m = Flat::default();
        for t in 0..threads {
            m.0.insert(layout.bump_cell(t), layout.first_node(t));
        }
        (layout, m)
    }

    fn verify(layout: &RbLayout, m: &Flat, expected: &BTreeSet<u64>) -> Result<usize, RbViolation> {
        rb_verify_with(
            |a| Some(m.0.get(&a).copied().unwrap_or(0)),
            layout,
            expected,
        )
    }

    #[test]
    fn empty_tree_verifies() {
        let (layout, m) = setup(4, 64);
        assert_eq!(verify(&layout, &m, &BTreeSet::new()), Ok(0));
    }

    #[test]
    fn ascending_inserts_stay_balanced() {
        let (layout, mut m) = setup(1, 16);
        for k in 1..=7 {
            assert_eq!(
                Tree {
                    mem: &mut m,
                    layout
                }
                .insert(0, k),
                Ok(true)
            );
        }
        let expected: BTreeSet<u64> = (1..=7).collect();
        assert_eq!(verify(&layout, &m, &expected), Ok(7));
        // Rotation after inserting 3 lifts 2 to the root; later fixups stay
        // in the right subtree (4 red over black 3 and 6).
        let root = m.0[&layout.root_cell()];
        assert_eq!(m.0[&(layout.node(root) + RB_KEY)], 2);
        assert_eq!(
            Tree {
                mem: &mut m,
                layout
            }
            .insert(0, 3),
            Ok(false)
        );
    }

    #[test]
    fn deleted_nodes_are_reused() {
        let (layout, mut m) = setup(1, 4);
        let mut t = Tree {
            mem: &mut m,
            layout,
        };
        for k in [10, 20, 30, 40] {
            t.insert(0, k).unwrap();
        }
        assert_eq!(t.delete(0, 20), Ok(true));
        assert_eq!(t.delete(0, 20), Ok(false));
        t.insert(0, 25).unwrap();
        assert_eq!(m.0[&layout.bump_cell(0)], 5);
        assert_eq!(verify(&layout, &m, &[10, 25, 30, 40].into()), Ok(4));
    }

    #[test]
    fn verify_catches_corruption() {
        let (layout, mut m) = setup(1, 16);
        for k in 1..=7 {
            Tree {
                mem: &mut m,
                layout,
            }
            .insert(0, k)
            .unwrap();
        }
        let expected: BTreeSet<u64> = (1..=7).collect();
        let root = m.0[&layout.root_cell()];

        let mut bad = Flat(m.0.clone());
        bad.0.insert(layout.node(root) + RB_COLOR, RED);
        assert_eq!(
            verify(&layout, &bad, &expected).unwrap_err().property,
            RbProperty::RootBlack
        );

        let mut bad = Flat(m.0.clone());
        bad.0.insert(layout.node(root) + RB_KEY, 100);
        assert_eq!(
            verify(&layout, &bad, &expected).unwrap_err().property,
            RbProperty::SearchOrder
        );

        let mut fewer = expected.clone();
        fewer.remove(&7);
        assert_eq!(
            verify(&layout, &m, &fewer).unwrap_err().property,
            RbProperty::KeySet
        );

        // Recolor a black leaf red under a red parent, or a lone black leaf.
        let mut found = false;
        for n in 1..=7 {
            let base = layout.node(n);
            let (l, r) = (m.0[&(base + RB_LEFT)], m.0[&(base + RB_RIGHT)]);
            if l == 0 && r == 0 && m.0[&(base + RB_COLOR)] == BLACK {
                let mut bad = Flat(m.0.clone());
                bad.0.insert(base + RB_COLOR, RED);
                let p = verify(&layout, &bad, &expected).unwrap_err().property;
                assert!(matches!(p, RbProperty::BlackHeight | RbProperty::RedRed));
                found = true;
            }
        }
        assert!(found);
    }

    #[test]
    fn generated_ops_respect_partition_and_mix() {
        let cfg = default_config();
        let (ops, live) = thread_ops(&cfg, 5, 2);
        assert_eq!(ops.len(), 64);
        assert!(live.iter().all(|k| k % 4 == 2 && *k < 1024));
        let inserts = ops.iter().filter(|o| matches!(o, RbOp::Insert(_))).count();
        assert!((25..=52).contains(&inserts), "{inserts}");
        assert_eq!(thread_ops(&cfg, 5, 2).0, ops);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn random_ops_keep_tree_valid(script in proptest::collection::vec((0u8..3, 0u64..40), 0..120)) {
                let (layout, mut m) = setup(1, 120);
                let mut model = BTreeSet::new();
                for (kind, key) in script {
                    let mut t = Tree { mem: &mut m, layout };
                    match kind {
                        0 => prop_assert_eq!(t.insert(0, key).unwrap(), model.insert(key)),
                        1 => prop_assert_eq!(t.lookup(key).unwrap(), model.contains(&key)),
                        _ => prop_assert_eq!(t.delete(0, key).unwrap(), model.remove(&key)),
                    }
                    prop_assert_eq!(verify(&layout, &m, &model), Ok(model.len()));
                }
            }
        }
    }
}
