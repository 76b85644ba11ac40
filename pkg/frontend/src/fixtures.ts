/**
 * Recorded service responses (captured from a local run, seed 4, min_risk
 * with 60 draws over a 12-row pool). Contract tests assert the console
 * renders these verbatim — if the wire format drifts, these fail first.
 */

import type {
  CommitAck,
  ErrorEnvelope,
  Recommendation,
  SessionState,
  Trace,
} from './types.js';

export const SESSION_ID = '7a90cefe37674e33ba32eb17da8e6b5f';

export const createdSession: SessionState = {
  schema: 'v1',
  id: SESSION_ID,
  seed: 4,
  n: 3,
  agents: ['east', 'north', 'west'],
  capacity_initial: [2, 2, 1],
  capacity_remaining: [2, 2, 1],
  mechanism: { kind: 'min_risk', n_draws: 60, lam: 0.2, t: 6, exhaustive: false },
  commits: [],
  next_ordinal: 0,
  closed: false,
  state_hash: '483efd2fdc12c27205c85adbb6b36e2868e24c0fab4886c1376c6816cb3cc61d',
};

export const whatIfProbe: Recommendation = {
  schema: 'v1',
  id: SESSION_ID,
  ordinal: 0,
  what_if: true,
  chosen_agent: 'east',
  per_agent_score: {
    east: 0.8414783333333333,
    north: 1.2354849999999997,
    west: 0.9249066666666664,
  },
  expected_loss: 0.0901050000000001,
  draws: 60,
};

export const commitAck: CommitAck = {
  schema: 'v1',
  id: SESSION_ID,
  ordinal: 0,
  agent: 'east',
  recommended: 'east',
  override: false,
  closed: false,
  capacity_remaining: [1, 2, 1],
  state_hash: '1c0c6b3012b0b05aeea598c4ac87d9512826365c8dd6de7bca31cb68033a17c7',
};

export const overrideAck: CommitAck = {
  schema: 'v1',
  id: SESSION_ID,
  ordinal: 1,
  agent: 'east',
  recommended: 'north',
  override: true,
  closed: false,
  capacity_remaining: [0, 2, 1],
  state_hash: '09ae22a01d96fa7197a60de9351c3e4b03554bcb9b3b64a03ac3e0327d8c62fd',
};

/** State after the two commits above: east exhausted, one an override. */
export const midSession: SessionState = {
  schema: 'v1',
  id: SESSION_ID,
  seed: 4,
  n: 3,
  agents: ['east', 'north', 'west'],
  capacity_initial: [2, 2, 1],
  capacity_remaining: [0, 2, 1],
  mechanism: { kind: 'min_risk', n_draws: 60, lam: 0.2, t: 6, exhaustive: false },
  commits: [
    { ordinal: 0, agent: 'east', recommended: 'east' },
    { ordinal: 1, agent: 'east', recommended: 'north' },
  ],
  next_ordinal: 2,
  closed: false,
  state_hash: '09ae22a01d96fa7197a60de9351c3e4b03554bcb9b3b64a03ac3e0327d8c62fd',
};

/** Probe taken while east had no remaining capacity: score map omits east. */
export const exhaustedProbe: Recommendation = {
  schema: 'v1',
  id: 'cae34da50f7c42faaf4546fb6495701a',
  ordinal: 1,
  what_if: true,
  chosen_agent: 'north',
  per_agent_score: { north: 0.8022549999999996, west: 1.0453916666666667 },
  expected_loss: 0.04195833333333332,
  draws: 60,
};

export const exhaustedState: SessionState = {
  schema: 'v1',
  id: 'cae34da50f7c42faaf4546fb6495701a',
  seed: 4,
  n: 3,
  agents: ['east', 'north', 'west'],
  capacity_initial: [1, 2, 1],
  capacity_remaining: [0, 2, 1],
  mechanism: { kind: 'min_risk', n_draws: 60, lam: 0.2, t: 6, exhaustive: false },
  commits: [{ ordinal: 0, agent: 'east', recommended: 'east' }],
  next_ordinal: 1,
  closed: false,
  state_hash: '0f08196830caa496a44f2071091248e64be2f0a1e26b784f5adca88da6d39607',
};

export const sessionTrace: Trace = {
  schema: 'v1',
  id: SESSION_ID,
  events: [
    {
      seq: 0,
      kind: 'genesis',
      ts: 1786722854.13443,
      payload: {
        schema: 'v1',
        id: SESSION_ID,
        seed: 4,
        n: 3,
        agents: ['east', 'north', 'west'],
        capacity: [2, 2, 1],
        mechanism: { kind: 'min_risk', n_draws: 60, lam: 0.2, t: 6, exhaustive: false },
        pool: [
          [0.805, 0.8079, 0.5153],
          [0.2858, 0.0539, 0.3834],
          [0.4085, 0.0453, 0.0488],
          [0.9992, 0.6524, 0.2345],
          [0.4349, 0.9742, 0.8977],
          [0.8442, 0.3924, 0.493],
          [0.6767, 0.0608, 0.5556],
          [0.2715, 0.8797, 0.0642],
          [0.6792, 0.8701, 0.2273],
          [0.8954, 0.8722, 0.0185],
          [0.7075, 0.0012, 0.5034],
          [0.4367, 0.2033, 0.3249],
        ],
      },
    },
    {
      seq: 1,
      kind: 'recommend',
      ts: 1786722854.759474,
      payload: {
        ordinal: 0,
        vector: [0.41, 0.77, 0.18],
        chosen_agent: 'east',
        per_agent_score: {
          east: 0.8414783333333333,
          north: 1.2354849999999997,
          west: 0.9249066666666664,
        },
        expected_loss: 0.0901050000000001,
        draws: 60,
      },
    },
    {
      seq: 2,
      kind: 'commit',
      ts: 1786722854.7664397,
      payload: { ordinal: 0, agent: 'east', recommended: 'east', vector: [0.41, 0.77, 0.18] },
    },
    {
      seq: 3,
      kind: 'recommend',
      ts: 1786722854.7735093,
      payload: {
        ordinal: 1,
        vector: [0.52, 0.13, 0.66],
        chosen_agent: 'north',
        per_agent_score: {
          east: 0.7222550000000002,
          north: 0.2936883333333332,
          west: 1.0663400000000005,
        },
        expected_loss: 0.0,
        draws: 60,
      },
    },
    {
      seq: 4,
      kind: 'commit',
      ts: 1786722854.780504,
      payload: { ordinal: 1, agent: 'east', recommended: 'north', vector: [0.52, 0.13, 0.66] },
    },
  ],
};

export const doubleCommitError: ErrorEnvelope = {
  schema: 'v1',
  code: 'double_commit',
  message: 'ordinal 0 was already committed',
  details: { ordinal: 0 },
};

export const staleOrdinalError: ErrorEnvelope = {
  schema: 'v1',
  code: 'stale_ordinal',
  message: 'expected ordinal 2, got 1',
  details: { expected: 2, got: 1 },
};
