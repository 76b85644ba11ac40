/**
 * Wire types for the assignment service HTTP API (schema "v1").
 *
 * These mirror the JSON bodies exactly; the console renders them verbatim and
 * never derives assignment numbers of its own.
 */

export interface MechanismBody {
  kind: 'min_risk' | 'approx_min_risk' | 'greedy' | 'weighted_cq' | 'sequential_cq' | 'predicted';
  n_draws?: number | null;
  lam?: number;
  t?: number;
  exhaustive?: boolean;
}

export interface CreateSessionBody {
  agents: string[];
  capacity: number[];
  pool: number[][];
  n: number;
  mechanism: MechanismBody;
  seed?: number;
}

export interface CommitRecord {
  ordinal: number;
  agent: string;
  recommended: string | null;
}

export interface SessionState {
  schema: 'v1';
  id: string;
  seed: number;
  n: number;
  agents: string[];
  capacity_initial: number[];
  capacity_remaining: number[];
  mechanism: Required<MechanismBody>;
  commits: CommitRecord[];
  next_ordinal: number;
  closed: boolean;
  state_hash: string;
}

export interface Recommendation {
  schema: 'v1';
  id: string;
  ordinal: number;
  what_if: boolean;
  chosen_agent: string;
  per_agent_score: Record<string, number>;
  expected_loss: number | null;
  draws: number;
}

export interface CommitAck {
  schema: 'v1';
  id: string;
  ordinal: number;
  agent: string;
  recommended: string | null;
  override: boolean;
  closed: boolean;
  capacity_remaining: number[];
  state_hash: string;
}

export type TraceEventKind = 'genesis' | 'recommend' | 'commit';

export interface TraceEvent {
  seq: number;
  kind: TraceEventKind;
  payload: Record<string, unknown>;
  ts: number;
}

export interface Trace {
  schema: 'v1';
  id: string;
  events: TraceEvent[];
}

export interface ErrorEnvelope {
  schema: 'v1';
  code:
    | 'validation'
    | 'infeasible'
    | 'not_found'
    | 'closed'
    | 'stale_ordinal'
    | 'double_commit'
    | 'exhausted_agent';
  message: string;
  details: Record<string, unknown>;
}
