//! Maximum-weight matching in general graphs.
//!
//! Primal-dual blossom method after Edmonds, following the O(n^3)
//! formulation of Galil ("Efficient algorithms for finding maximum matching
//! in graphs", ACM Computing Surveys, 1986) in the arrangement popularized
//! by Joris van Rantwijk's reference implementation. Weights are integers
//! so all dual arithmetic is exact; callers with float weights scale them
//! first.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

const LABEL_FREE: u8 = 0;
const LABEL_S: u8 = 1;
const LABEL_T: u8 = 2;
// S label with a "visited" mark used while scanning for a blossom base.
const LABEL_MARKED: u8 = 5;

struct Matcher {
    nvertex: usize,
    edges: Vec<(usize, usize, i64)>,
    // endpoint[p]: vertex at endpoint p; edge k has endpoints 2k, 2k+1
    endpoint: Vec<usize>,
    // neighbend[v]: remote endpoints of edges incident to v
    neighbend: Vec<Vec<usize>>,
    // mate[v]: remote endpoint of the matched edge, or NONE
    mate: Vec<usize>,
    label: Vec<u8>,
    labelend: Vec<usize>,
    inblossom: Vec<usize>,
    blossomparent: Vec<usize>,
    blossomchilds: Vec<Vec<usize>>,
    blossombase: Vec<usize>,
    blossomendps: Vec<Vec<usize>>,
    bestedge: Vec<usize>,
    blossombestedges: Vec<Option<Vec<usize>>>,
    unusedblossoms: Vec<usize>,
    dualvar: Vec<i64>,
    allowedge: Vec<bool>,
    queue: Vec<usize>,
    max_cardinality: bool,
}

impl Matcher {
    fn new(nvertex: usize, edges: Vec<(usize, usize, i64)>, max_cardinality: bool) -> Self {
        let nedge = edges.len();
        // double the weights so that all deltas stay integral
        let edges: Vec<(usize, usize, i64)> =
            edges.into_iter().map(|(i, j, w)| (i, j, 2 * w)).collect();
        let maxweight = edges.iter().map(|e| e.2).max().unwrap_or(0).max(0);
        let mut endpoint = Vec::with_capacity(2 * nedge);
        for &(i, j, _) in &edges {
            endpoint.push(i);
            endpoint.push(j);
        }
        let mut neighbend = vec![Vec::new(); nvertex];
        for (k, &(i, j, _)) in edges.iter().enumerate() {
            neighbend[i].push(2 * k + 1);
            neighbend[j].push(2 * k);
        }
        let mut dualvar = vec![maxweight; nvertex];
        dualvar.extend(std::iter::repeat(0).take(nvertex));
        Matcher {
            nvertex,
            endpoint,
            neighbend,
            mate: vec![NONE; nvertex],
            label: vec![LABEL_FREE; 2 * nvertex],
            labelend: vec![NONE; 2 * nvertex],
            inblossom: (0..nvertex).collect(),
            blossomparent: vec![NONE; 2 * nvertex],
            blossomchilds: vec![Vec::new(); 2 * nvertex],
            blossombase: (0..nvertex).chain(std::iter::repeat(NONE).take(nvertex)).collect(),
            blossomendps: vec![Vec::new(); 2 * nvertex],
            bestedge: vec![NONE; 2 * nvertex],
            blossombestedges: vec![None; 2 * nvertex],
            unusedblossoms: (nvertex..2 * nvertex).collect(),
            dualvar,
            allowedge: vec![false; nedge],
            queue: Vec::new(),
            edges,
            max_cardinality,
        }
    }

    /// Slack of edge k; nonnegative for all edges at a dual-feasible point
    /// (ignoring blossom duals, which are handled structurally).
    fn slack(&self, k: usize) -> i64 {
        let (i, j, wt) = self.edges[k];
        self.dualvar[i] + self.dualvar[j] - wt
    }

    /// All vertices contained in (possibly nested) blossom b.
    fn blossom_leaves(&self, b: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![b];
        while let Some(x) = stack.pop() {
            if x < self.nvertex {
                out.push(x);
            } else {
                stack.extend(self.blossomchilds[x].iter().copied());
            }
        }
        out
    }

    fn assign_label(&mut self, w: usize, t: u8, p: usize) {
        let b = self.inblossom[w];
        debug_assert!(self.label[w] == LABEL_FREE && self.label[b] == LABEL_FREE);
        self.label[w] = t;
        self.label[b] = t;
        self.labelend[w] = p;
        self.labelend[b] = p;
        self.bestedge[w] = NONE;
        self.bestedge[b] = NONE;
        if t == LABEL_S {
            let leaves = self.blossom_leaves(b);
            self.queue.extend(leaves);
        } else {
            let base = self.blossombase[b];
            debug_assert_ne!(self.mate[base], NONE);
            let mate_p = self.mate[base];
            self.assign_label(self.endpoint[mate_p], LABEL_S, mate_p ^ 1);
        }
    }

    /// Traces back from both ends of a tight edge between S-vertices;
    /// returns the base of the new blossom, or NONE if the paths reach two
    /// different roots (an augmenting path).
    fn scan_blossom(&mut self, mut v: usize, mut w: usize) -> usize {
        let mut path = Vec::new();
        let mut base = NONE;
        while v != NONE || w != NONE {
            let mut b = self.inblossom[v];
            if self.label[b] & 4 != 0 {
                base = self.blossombase[b];
                break;
            }
            debug_assert_eq!(self.label[b], LABEL_S);
            path.push(b);
            self.label[b] = LABEL_MARKED;
            debug_assert_eq!(self.labelend[b], self.mate[self.blossombase[b]]);
            if self.labelend[b] == NONE {
                v = NONE;
            } else {
                v = self.endpoint[self.labelend[b]];
                b = self.inblossom[v];
                debug_assert_eq!(self.label[b], LABEL_T);
                debug_assert_ne!(self.labelend[b], NONE);
                v = self.endpoint[self.labelend[b]];
            }
            if w != NONE {
                std::mem::swap(&mut v, &mut w);
            }
        }
        for b in path {
            self.label[b] = LABEL_S;
        }
        base
    }

    /// Contracts the cycle through tight edge k and the alternating tree
    /// paths to `base` into a new blossom.
    fn add_blossom(&mut self, base: usize, k: usize) {
        let (mut v, mut w, _) = self.edges[k];
        let bb = self.inblossom[base];
        let mut bv = self.inblossom[v];
        let mut bw = self.inblossom[w];
        let b = self.unusedblossoms.pop().expect("blossom ids available");
        self.blossombase[b] = base;
        self.blossomparent[b] = NONE;
        self.blossomparent[bb] = b;

        let mut path = Vec::new();
        let mut endps = Vec::new();
        while bv != bb {
            self.blossomparent[bv] = b;
            path.push(bv);
            endps.push(self.labelend[bv]);
            debug_assert!(
                self.label[bv] == LABEL_T
                    || (self.label[bv] == LABEL_S
                        && self.labelend[bv] == self.mate[self.blossombase[bv]])
            );
            debug_assert_ne!(self.labelend[bv], NONE);
            v = self.endpoint[self.labelend[bv]];
            bv = self.inblossom[v];
        }
        path.push(bb);
        path.reverse();
        endps.reverse();
        endps.push(2 * k);
        while bw != bb {
            self.blossomparent[bw] = b;
            path.push(bw);
            endps.push(self.labelend[bw] ^ 1);
            debug_assert!(
                self.label[bw] == LABEL_T
                    || (self.label[bw] == LABEL_S
                        && self.labelend[bw] == self.mate[self.blossombase[bw]])
            );
            debug_assert_ne!(self.labelend[bw], NONE);
            w = self.endpoint[self.labelend[bw]];
            bw = self.inblossom[w];
        }

        debug_assert_eq!(self.label[bb], LABEL_S);
        self.label[b] = LABEL_S;
        self.labelend[b] = self.labelend[bb];
        self.dualvar[b] = 0;
        for leaf in self.blossom_leaves(b) {
            if self.label[self.inblossom[leaf]] == LABEL_T {
                self.queue.push(leaf);
            }
            self.inblossom[leaf] = b;
        }
        self.blossomchilds[b] = path;
        self.blossomendps[b] = endps;

        // collect the least-slack edge to every neighbouring S-blossom
        let mut bestedgeto = vec![NONE; 2 * self.nvertex];
        let path = self.blossomchilds[b].clone();
        for bv in path {
            let nblists: Vec<Vec<usize>> = match self.blossombestedges[bv].take() {
                Some(lst) => vec![lst],
                None => self
                    .blossom_leaves(bv)
                    .into_iter()
                    .map(|v| self.neighbend[v].iter().map(|p| p / 2).collect())
                    .collect(),
            };
            for nblist in nblists {
                for k2 in nblist {
                    let (mut i, mut j, _) = self.edges[k2];
                    if self.inblossom[j] == b {
                        std::mem::swap(&mut i, &mut j);
                    }
                    let bj = self.inblossom[j];
                    if bj != b
                        && self.label[bj] == LABEL_S
                        && (bestedgeto[bj] == NONE
                            || self.slack(k2) < self.slack(bestedgeto[bj]))
                    {
                        bestedgeto[bj] = k2;
                    }
                }
            }
            self.bestedge[bv] = NONE;
        }
        let best: Vec<usize> = bestedgeto.into_iter().filter(|&k2| k2 != NONE).collect();
        self.bestedge[b] = NONE;
        for &k2 in &best {
            if self.bestedge[b] == NONE || self.slack(k2) < self.slack(self.bestedge[b]) {
                self.bestedge[b] = k2;
            }
        }
        self.blossombestedges[b] = Some(best);
    }

    /// Undoes a blossom contraction, relabeling sub-blossoms when the
    /// expansion happens mid-stage on a T-blossom.
    fn expand_blossom(&mut self, b: usize, endstage: bool) {
        let childs = self.blossomchilds[b].clone();
        for &s in &childs {
            self.blossomparent[s] = NONE;
            if s < self.nvertex {
                self.inblossom[s] = s;
            } else if endstage && self.dualvar[s] == 0 {
                self.expand_blossom(s, endstage);
            } else {
                for leaf in self.blossom_leaves(s) {
                    self.inblossom[leaf] = s;
                }
            }
        }
        if !endstage && self.label[b] == LABEL_T {
            debug_assert_ne!(self.labelend[b], NONE);
            let entrychild = self.inblossom[self.endpoint[self.labelend[b] ^ 1]];
            let nchilds = self.blossomchilds[b].len() as isize;
            let mut j = self.blossomchilds[b]
                .iter()
                .position(|&c| c == entrychild)
                .expect("entry child present") as isize;
            let (jstep, endptrick): (isize, usize) = if j & 1 != 0 {
                j -= nchilds;
                (1, 0)
            } else {
                (-1, 1)
            };
            let idx = move |j: isize| -> usize { (((j % nchilds) + nchilds) % nchilds) as usize };
            let mut p = self.labelend[b];
            while j != 0 {
                // relabel the T-sub-blossom
                self.label[self.endpoint[p ^ 1]] = LABEL_FREE;
                let ep = self.blossomendps[b][idx(j - endptrick as isize)] ^ endptrick ^ 1;
                self.label[self.endpoint[ep]] = LABEL_FREE;
                self.assign_label(self.endpoint[p ^ 1], LABEL_T, p);
                // step to the next S-sub-blossom and note its forward endpoint
                self.allowedge[self.blossomendps[b][idx(j - endptrick as isize)] / 2] = true;
                j += jstep;
                p = self.blossomendps[b][idx(j - endptrick as isize)] ^ endptrick;
                // step to the next T-sub-blossom
                self.allowedge[p / 2] = true;
                j += jstep;
            }
            // relabel the base T-sub-blossom without stepping to its mate
            let bv = self.blossomchilds[b][idx(j)];
            let pv = self.endpoint[p ^ 1];
            self.label[pv] = LABEL_T;
            self.label[bv] = LABEL_T;
            self.labelend[pv] = p;
            self.labelend[bv] = p;
            self.bestedge[bv] = NONE;
            // continue along the blossom until we get back to entrychild
            j += jstep;
            while self.blossomchilds[b][idx(j)] != entrychild {
                let bv = self.blossomchilds[b][idx(j)];
                if self.label[bv] == LABEL_S {
                    j += jstep;
                    continue;
                }
                let mut reachable = NONE;
                for leaf in self.blossom_leaves(bv) {
                    if self.label[leaf] != LABEL_FREE {
                        reachable = leaf;
                        break;
                    }
                }
                if reachable != NONE {
                    let v = reachable;
                    debug_assert_eq!(self.label[v], LABEL_T);
                    debug_assert_eq!(self.inblossom[v], bv);
                    self.label[v] = LABEL_FREE;
                    let base_mate = self.mate[self.blossombase[bv]];
                    self.label[self.endpoint[base_mate]] = LABEL_FREE;
                    let le = self.labelend[v];
                    self.assign_label(v, LABEL_T, le);
                }
                j += jstep;
            }
        }
        self.label[b] = LABEL_FREE;
        self.labelend[b] = NONE;
        self.blossomchilds[b].clear();
        self.blossomendps[b].clear();
        self.blossombase[b] = NONE;
        self.blossombestedges[b] = None;
        self.bestedge[b] = NONE;
        self.unusedblossoms.push(b);
    }

    /// Swaps matched and unmatched edges along the path within blossom b
    /// from vertex v to the blossom base, and rotates the base to v.
    fn augment_blossom(&mut self, b: usize, v: usize) {
        let mut t = v;
        while self.blossomparent[t] != b {
            t = self.blossomparent[t];
        }
        if t >= self.nvertex {
            self.augment_blossom(t, v);
        }
        let nchilds = self.blossomchilds[b].len() as isize;
        let i = self.blossomchilds[b]
            .iter()
            .position(|&c| c == t)
            .expect("sub-blossom present") as isize;
        let mut j = i;
        let (jstep, endptrick): (isize, usize) = if i & 1 != 0 {
            j -= nchilds;
            (1, 0)
        } else {
            (-1, 1)
        };
        let idx = move |j: isize| -> usize { (((j % nchilds) + nchilds) % nchilds) as usize };
        while j != 0 {
            j += jstep;
            let t = self.blossomchilds[b][idx(j)];
            let p = self.blossomendps[b][idx(j - endptrick as isize)] ^ endptrick;
            if t >= self.nvertex {
                self.augment_blossom(t, self.endpoint[p]);
            }
            j += jstep;
            let t = self.blossomchilds[b][idx(j)];
            if t >= self.nvertex {
                self.augment_blossom(t, self.endpoint[p ^ 1]);
            }
            self.mate[self.endpoint[p]] = p ^ 1;
            self.mate[self.endpoint[p ^ 1]] = p;
        }
        self.blossomchilds[b].rotate_left(i as usize);
        self.blossomendps[b].rotate_left(i as usize);
        self.blossombase[b] = self.blossombase[self.blossomchilds[b][0]];
        debug_assert_eq!(self.blossombase[b], v);
    }

    /// Augments the matching along the path through tight edge k.
    fn augment_matching(&mut self, k: usize) {
        let (v, w, _) = self.edges[k];
        for (mut s, mut p) in [(v, 2 * k + 1), (w, 2 * k)] {
            loop {
                let bs = self.inblossom[s];
                debug_assert_eq!(self.label[bs], LABEL_S);
                debug_assert_eq!(self.labelend[bs], self.mate[self.blossombase[bs]]);
                if bs >= self.nvertex {
                    self.augment_blossom(bs, s);
                }
                self.mate[s] = p;
                if self.labelend[bs] == NONE {
                    break;
                }
                let t = self.endpoint[self.labelend[bs]];
                let bt = self.inblossom[t];
                debug_assert_eq!(self.label[bt], LABEL_T);
                debug_assert_ne!(self.labelend[bt], NONE);
                s = self.endpoint[self.labelend[bt]];
                let j = self.endpoint[self.labelend[bt] ^ 1];
                debug_assert_eq!(self.blossombase[bt], t);
                if bt >= self.nvertex {
                    self.augment_blossom(bt, j);
                }
                self.mate[j] = self.labelend[bt];
                p = self.labelend[bt] ^ 1;
            }
        }
    }

    fn solve(mut self) -> Vec<usize> {
        if self.nvertex == 0 || self.edges.is_empty() {
            return vec![NONE; self.nvertex];
        }
        for _stage in 0..self.nvertex {
            self.label.iter_mut().for_each(|l| *l = LABEL_FREE);
            self.bestedge.iter_mut().for_each(|e| *e = NONE);
            for be in self.blossombestedges[self.nvertex..].iter_mut() {
                *be = None;
            }
            self.allowedge.iter_mut().for_each(|a| *a = false);
            self.queue.clear();
            for v in 0..self.nvertex {
                if self.mate[v] == NONE && self.label[self.inblossom[v]] == LABEL_FREE {
                    self.assign_label(v, LABEL_S, NONE);
                }
            }
            let mut augmented = false;
            loop {
                while let Some(v) = self.queue.pop() {
                    debug_assert_eq!(self.label[self.inblossom[v]], LABEL_S);
                    let ends = self.neighbend[v].clone();
                    for p in ends {
                        let k = p / 2;
                        let w = self.endpoint[p];
                        if self.inblossom[v] == self.inblossom[w] {
                            continue;
                        }
                        let mut kslack = 0;
                        if !self.allowedge[k] {
                            kslack = self.slack(k);
                            if kslack <= 0 {
                                self.allowedge[k] = true;
                            }
                        }
                        if self.allowedge[k] {
                            if self.label[self.inblossom[w]] == LABEL_FREE {
                                self.assign_label(w, LABEL_T, p ^ 1);
                            } else if self.label[self.inblossom[w]] == LABEL_S {
                                let base = self.scan_blossom(v, w);
                                if base != NONE {
                                    self.add_blossom(base, k);
                                } else {
                                    self.augment_matching(k);
                                    augmented = true;
                                    break;
                                }
                            } else if self.label[w] == LABEL_FREE {
                                debug_assert_eq!(self.label[self.inblossom[w]], LABEL_T);
                                self.label[w] = LABEL_T;
                                self.labelend[w] = p ^ 1;
                            }
                        } else if self.label[self.inblossom[w]] == LABEL_S {
                            let b = self.inblossom[v];
                            if self.bestedge[b] == NONE
                                || kslack < self.slack(self.bestedge[b])
                            {
                                self.bestedge[b] = k;
                            }
                        } else if self.label[w] == LABEL_FREE
                            && (self.bestedge[w] == NONE
                                || kslack < self.slack(self.bestedge[w]))
                        {
                            self.bestedge[w] = k;
                        }
                    }
                    if augmented {
                        break;
                    }
                }
                if augmented {
                    break;
                }

                // no augmenting path under the current duals: update them
                let mut deltatype = -1;
                let mut delta = 0i64;
                let mut deltaedge = NONE;
                let mut deltablossom = NONE;
                if !self.max_cardinality {
                    deltatype = 1;
                    delta = self.dualvar[..self.nvertex]
                        .iter()
                        .copied()
                        .min()
                        .unwrap_or(0);
                }
                for v in 0..self.nvertex {
                    if self.label[self.inblossom[v]] == LABEL_FREE && self.bestedge[v] != NONE
                    {
                        let d = self.slack(self.bestedge[v]);
                        if deltatype == -1 || d < delta {
                            delta = d;
                            deltatype = 2;
                            deltaedge = self.bestedge[v];
                        }
                    }
                }
                for b in 0..2 * self.nvertex {
                    if self.blossomparent[b] == NONE
                        && self.label[b] == LABEL_S
                        && self.bestedge[b] != NONE
                    {
                        let kslack = self.slack(self.bestedge[b]);
                        debug_assert_eq!(kslack % 2, 0);
                        let d = kslack / 2;
                        if deltatype == -1 || d < delta {
                            delta = d;
                            deltatype = 3;
                            deltaedge = self.bestedge[b];
                        }
                    }
                }
                for b in self.nvertex..2 * self.nvertex {
                    if self.blossombase[b] != NONE
                        && self.blossomparent[b] == NONE
                        && self.label[b] == LABEL_T
                        && (deltatype == -1 || self.dualvar[b] < delta)
                    {
                        delta = self.dualvar[b];
                        deltatype = 4;
                        deltablossom = b;
                    }
                }
                if deltatype == -1 {
                    // no further progress possible; only in max-cardinality
                    debug_assert!(self.max_cardinality);
                    deltatype = 1;
                    delta = self.dualvar[..self.nvertex]
                        .iter()
                        .copied()
                        .min()
                        .unwrap_or(0)
                        .max(0);
                }

                for v in 0..self.nvertex {
                    match self.label[self.inblossom[v]] {
                        LABEL_S => self.dualvar[v] -= delta,
                        LABEL_T => self.dualvar[v] += delta,
                        _ => {}
                    }
                }
                for b in self.nvertex..2 * self.nvertex {
                    if self.blossombase[b] != NONE && self.blossomparent[b] == NONE {
                        match self.label[b] {
                            LABEL_S => self.dualvar[b] += delta,
                            LABEL_T => self.dualvar[b] -= delta,
                            _ => {}
                        }
                    }
                }

                match deltatype {
                    1 => break,
                    2 => {
                        self.allowedge[deltaedge] = true;
                        let (mut i, j, _) = self.edges[deltaedge];
                        if self.label[self.inblossom[i]] == LABEL_FREE {
                            i = j;
                        }
                        debug_assert_eq!(self.label[self.inblossom[i]], LABEL_S);
                        self.queue.push(i);
                    }
                    3 => {
                        self.allowedge[deltaedge] = true;
                        let (i, _, _) = self.edges[deltaedge];
                        debug_assert_eq!(self.label[self.inblossom[i]], LABEL_S);
                        self.queue.push(i);
                    }
                    4 => self.expand_blossom(deltablossom, false),
                    _ => unreachable!(),
                }
            }
            if !augmented {
                break;
            }
            // expand unlabeled blossoms whose dual dropped to zero
            for b in self.nvertex..2 * self.nvertex {
                if self.blossomparent[b] == NONE
                    && self.blossombase[b] != NONE
                    && self.label[b] == LABEL_S
                    && self.dualvar[b] == 0
                {
                    self.expand_blossom(b, true);
                }
            }
        }
        // translate remote endpoints into partner vertices
        let mut mate = vec![NONE; self.nvertex];
        for v in 0..self.nvertex {
            if self.mate[v] != NONE {
                mate[v] = self.endpoint[self.mate[v]];
            }
        }
        for v in 0..self.nvertex {
            debug_assert!(mate[v] == NONE || mate[mate[v]] == v);
        }
        mate
    }
}

/// Computes a maximum-weight matching of the undirected graph given by
/// `edges` on vertices `0..n`. With `max_cardinality` the matching is
/// maximum-weight among maximum-cardinality matchings. Returns `mate`,
/// where `mate[v] = Some(u)` when v is matched to u.
///
/// Edges must connect distinct vertices and appear at most once per pair.
pub fn max_weight_matching(
    n: usize,
    edges: &[(usize, usize, i64)],
    max_cardinality: bool,
) -> Result<Vec<Option<usize>>> {
    for &(i, j, _) in edges {
        if i >= n || j >= n {
            return Err(Error::InvalidConfig(format!(
                "edge ({i}, {j}) out of range for {n} vertices"
            )));
        }
        if i == j {
            return Err(Error::InvalidConfig(format!("self loop at vertex {i}")));
        }
    }
    let mate = Matcher::new(n, edges.to_vec(), max_cardinality).solve();
    Ok(mate
        .into_iter()
        .map(|m| if m == NONE { None } else { Some(m) })
        .collect())
}

/// Maximum-weight perfect matching; errors when no perfect matching exists.
pub fn max_weight_perfect_matching(
    n: usize,
    edges: &[(usize, usize, i64)],
) -> Result<Vec<usize>> {
    if n % 2 != 0 {
        return Err(Error::OddBagCount(n));
    }
    let mate = max_weight_matching(n, edges, true)?;
    let mut out = Vec::with_capacity(n);
    for (v, m) in mate.iter().enumerate() {
        match m {
            Some(u) => out.push(*u),
            None => {
                return Err(Error::InvalidConfig(format!(
                    "graph admits no perfect matching (vertex {v} unmatched)"
                )))
            }
        }
    }
    Ok(out)
}
