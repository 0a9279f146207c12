"""Position-tension score in [0,1] from betweenness centrality of attacked pieces.

The piece interaction graph connects occupied squares by pseudo-legal
capture threats (attack edges, opposite colors) and guard relations
(defense edges, same color). Pinned pieces still produce edges: the threat
model deliberately ignores check legality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx

from .chess.board import (
    DIAG_RAYS,
    KING_TARGETS,
    KNIGHT_TARGETS,
    ORTHO_RAYS,
    PAWN_CAPTURES,
    PieceType,
    Position,
)
from .chess.board import mirror as board_mirror


@dataclass
class InteractionGraph:
    nodes: dict  # square -> (color, PieceType)
    attack_edges: set = field(default_factory=set)  # (attacker_sq, target_sq)
    defense_edges: set = field(default_factory=set)

    def attacked_nodes(self) -> set:
        return {v for _, v in self.attack_edges}


@dataclass
class FragilityReport:
    score: float
    betweenness: dict  # square -> normalized betweenness in [0,1]
    attacked: set
    nodes: dict


def _threat_targets(board, sq: int, piece: int):
    """Squares the piece on `sq` could capture on, ignoring check legality."""
    ptype = PieceType(abs(piece))
    color = 1 if piece > 0 else -1
    if ptype == PieceType.PAWN:
        yield from PAWN_CAPTURES[color][sq]
        return
    if ptype == PieceType.KNIGHT:
        yield from KNIGHT_TARGETS[sq]
        return
    if ptype == PieceType.KING:
        yield from KING_TARGETS[sq]
        return
    rays = ()
    if ptype in (PieceType.ROOK, PieceType.QUEEN):
        rays += ORTHO_RAYS[sq]
    if ptype in (PieceType.BISHOP, PieceType.QUEEN):
        rays += DIAG_RAYS[sq]
    for ray in rays:
        for t in ray:
            if board[t]:
                yield t
                break


def build_interaction_graph(pos: Position) -> InteractionGraph:
    board = pos.board
    nodes = {
        sq: (1 if p > 0 else -1, PieceType(abs(p))) for sq, p in enumerate(board) if p
    }
    graph = InteractionGraph(nodes=nodes)
    for sq, p in enumerate(board):
        if not p:
            continue
        for target in _threat_targets(board, sq, p):
            occupant = board[target]
            if not occupant:
                continue
            if occupant * p < 0:
                graph.attack_edges.add((sq, target))
            else:
                graph.defense_edges.add((sq, target))
    return graph


def betweenness_centrality(graph: InteractionGraph) -> dict:
    """Normalized shortest-path betweenness on the undirected projection.

    Normalization is (n-1)(n-2)/2 pair count for n >= 3; all zeros below that.
    """
    g = nx.Graph()
    g.add_nodes_from(graph.nodes)
    g.add_edges_from(graph.attack_edges)
    g.add_edges_from(graph.defense_edges)
    return nx.betweenness_centrality(g, normalized=True)


def score_from_graph(graph: InteractionGraph) -> float:
    if not graph.nodes:
        return 0.0
    bc = betweenness_centrality(graph)
    # fsum is order-independent, so relabeled isomorphic graphs score identically.
    raw = math.fsum(bc[v] for v in graph.attacked_nodes()) / len(graph.nodes)
    return min(1.0, max(0.0, raw))


def fragility_score(pos: Position) -> float:
    """Mean betweenness mass carried by attacked pieces; 0 iff nothing is attacked.

    Scored as the average over the position and its color mirror, which makes
    mirror symmetry hold exactly instead of up to float accumulation order.
    """
    a = score_from_graph(build_interaction_graph(pos))
    b = score_from_graph(build_interaction_graph(board_mirror(pos)))
    return (a + b) / 2.0


def fragility_report(pos: Position) -> FragilityReport:
    graph = build_interaction_graph(pos)
    bc = betweenness_centrality(graph) if graph.nodes else {}
    return FragilityReport(
        score=fragility_score(pos),
        betweenness=bc,
        attacked=graph.attacked_nodes(),
        nodes=graph.nodes,
    )
