use super::{Dataset, PreparedScore};
use crate::domain::{MapId, PlayerId};

/// Two-sided adjacency over an edge list.
///
/// Players and maps are indexed in sorted id order. Every edge index appears
/// exactly once in `by_player` and once in `by_map`.
#[derive(Debug, Clone)]
pub struct BipartiteIndex {
    edges: Vec<PreparedScore>,
    values: Vec<f64>,
    players: Vec<PlayerId>,
    maps: Vec<MapId>,
    edge_player: Vec<usize>,
    edge_map: Vec<usize>,
    by_player: Vec<Vec<usize>>,
    by_map: Vec<Vec<usize>>,
}

pub fn build_graph(ds: &Dataset) -> BipartiteIndex {
    BipartiteIndex::with_nodes(ds.edges.clone(), ds.players.iter().cloned(), ds.maps.iter().cloned())
}

impl BipartiteIndex {
    pub fn from_edges(edges: Vec<PreparedScore>) -> Self {
        Self::with_nodes(edges, std::iter::empty(), std::iter::empty())
    }

    /// Builds the index over `edges` plus any extra nodes, which are kept
    /// even if they have no incident edge.
    pub fn with_nodes(
        edges: Vec<PreparedScore>,
        players: impl IntoIterator<Item = PlayerId>,
        maps: impl IntoIterator<Item = MapId>,
    ) -> Self {
        let mut player_ids: Vec<PlayerId> =
            edges.iter().map(|e| e.player.clone()).chain(players).collect();
        player_ids.sort_unstable();
        player_ids.dedup();
        let mut map_ids: Vec<MapId> = edges.iter().map(|e| e.map.clone()).chain(maps).collect();
        map_ids.sort_unstable();
        map_ids.dedup();

        let mut by_player = vec![Vec::new(); player_ids.len()];
        let mut by_map = vec![Vec::new(); map_ids.len()];
        let mut edge_player = Vec::with_capacity(edges.len());
        let mut edge_map = Vec::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            let p = player_ids.binary_search(&e.player).expect("player indexed");
            let m = map_ids.binary_search(&e.map).expect("map indexed");
            by_player[p].push(i);
            by_map[m].push(i);
            edge_player.push(p);
            edge_map.push(m);
        }
        let values = edges.iter().map(|e| e.value.get()).collect();

        Self { edges, values, players: player_ids, maps: map_ids, edge_player, edge_map, by_player, by_map }
    }

    pub fn edges(&self) -> &[PreparedScore] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Score value of edge `i`.
    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn players(&self) -> &[PlayerId] {
        &self.players
    }

    pub fn maps(&self) -> &[MapId] {
        &self.maps
    }

    pub fn player_index(&self, id: &PlayerId) -> Option<usize> {
        self.players.binary_search(id).ok()
    }

    pub fn map_index(&self, id: &MapId) -> Option<usize> {
        self.maps.binary_search(id).ok()
    }

    /// Player and map index of edge `i`.
    pub fn endpoints(&self, i: usize) -> (usize, usize) {
        (self.edge_player[i], self.edge_map[i])
    }

    /// Edge indices incident to player `p` (by index).
    pub fn player_edges(&self, p: usize) -> &[usize] {
        &self.by_player[p]
    }

    pub fn map_edges(&self, m: usize) -> &[usize] {
        &self.by_map[m]
    }

    pub fn edges_of_player(&self, id: &PlayerId) -> Option<&[usize]> {
        self.player_index(id).map(|p| self.player_edges(p))
    }

    pub fn edges_of_map(&self, id: &MapId) -> Option<&[usize]> {
        self.map_index(id).map(|m| self.map_edges(m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::ScoreValue;
    use std::collections::BTreeMap;

    fn edge(p: &str, m: &str) -> PreparedScore {
        PreparedScore {
            player: PlayerId::new(p).unwrap(),
            map: MapId::new(m).unwrap(),
            value: ScoreValue::new(1.0).unwrap(),
            adjusted_raw: None,
            timestamp: 0,
        }
    }

    fn check_consistent(g: &BipartiteIndex) {
        let mut seen_p = vec![0; g.edge_count()];
        let mut seen_m = vec![0; g.edge_count()];
        for p in 0..g.players().len() {
            for &i in g.player_edges(p) {
                seen_p[i] += 1;
                assert_eq!(g.endpoints(i).0, p);
            }
        }
        for m in 0..g.maps().len() {
            for &i in g.map_edges(m) {
                seen_m[i] += 1;
                assert_eq!(g.endpoints(i).1, m);
            }
        }
        assert!(seen_p.iter().all(|&c| c == 1));
        assert!(seen_m.iter().all(|&c| c == 1));
    }

    #[test]
    fn complete_two_by_two() {
        let g = BipartiteIndex::from_edges(vec![
            edge("a", "x"),
            edge("a", "y"),
            edge("b", "x"),
            edge("b", "y"),
        ]);
        for p in 0..2 {
            assert_eq!(g.player_edges(p).len(), 2);
            assert_eq!(g.map_edges(p).len(), 2);
        }
        check_consistent(&g);
    }

    #[test]
    fn single_edge_player() {
        let g = BipartiteIndex::from_edges(vec![edge("solo", "x"), edge("b", "x"), edge("b", "y")]);
        let solo = PlayerId::new("solo").unwrap();
        assert_eq!(g.edges_of_player(&solo).unwrap(), &[0]);
        let y = MapId::new("y").unwrap();
        assert_eq!(g.edges_of_map(&y).unwrap().len(), 1);
        check_consistent(&g);
    }

    #[test]
    fn seven_edge_degrees_match_brute_force() {
        let pairs = [("p1", "m1"), ("p1", "m2"), ("p2", "m1"), ("p3", "m3"), ("p2", "m3"), ("p4", "m1"), ("p1", "m3")];
        let g = BipartiteIndex::from_edges(pairs.iter().map(|(p, m)| edge(p, m)).collect());
        let mut want_p: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        let mut want_m: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, (p, m)) in pairs.iter().enumerate() {
            want_p.entry(p).or_default().push(i);
            want_m.entry(m).or_default().push(i);
        }
        for (p, list) in want_p {
            assert_eq!(g.edges_of_player(&PlayerId::new(p).unwrap()).unwrap(), list.as_slice());
        }
        for (m, list) in want_m {
            assert_eq!(g.edges_of_map(&MapId::new(m).unwrap()).unwrap(), list.as_slice());
        }
        check_consistent(&g);
    }

    #[test]
    fn extra_nodes_are_isolated() {
        let g = BipartiteIndex::with_nodes(
            vec![edge("a", "x")],
            [PlayerId::new("ghost").unwrap()],
            [MapId::new("x").unwrap()],
        );
        assert_eq!(g.players().len(), 2);
        assert_eq!(g.maps().len(), 1);
        assert_eq!(g.edges_of_player(&PlayerId::new("ghost").unwrap()).unwrap().len(), 0);
    }
}
