/**
 * Typed fetch client for the assignment service.
 *
 * Every method resolves to the parsed success body or throws ServiceError
 * carrying the service's error envelope untouched, so callers can surface
 * code + message verbatim.
 */

import type {
  CommitAck,
  CreateSessionBody,
  ErrorEnvelope,
  Recommendation,
  SessionState,
  Trace,
} from './types.js';

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly envelope: ErrorEnvelope,
  ) {
    super(`${envelope.code}: ${envelope.message}`);
    this.name = 'ServiceError';
  }
}

async function parse<T>(res: Response): Promise<T> {
  if (res.ok) {
    return (await res.json()) as T;
  }
  const envelope = (await res.json()) as ErrorEnvelope;
  throw new ServiceError(res.status, envelope);
}

export class ApiClient {
  constructor(private readonly baseUrl: string) {}

  private post(path: string, body: unknown): Promise<Response> {
    return fetch(`${this.baseUrl}${path}`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  async createSession(body: CreateSessionBody): Promise<SessionState> {
    return parse(await this.post('/sessions', body));
  }

  async getSession(id: string): Promise<SessionState> {
    return parse(await fetch(`${this.baseUrl}/sessions/${id}`));
  }

  /**
   * what_if=true probes without journaling; the armed (what_if=false) call is
   * the one the service records and pairs with the following commit.
   */
  async recommend(id: string, vector: number[], whatIf: boolean): Promise<Recommendation> {
    return parse(await this.post(`/sessions/${id}/recommend`, { vector, what_if: whatIf }));
  }

  async commit(id: string, ordinal: number, agent: string): Promise<CommitAck> {
    return parse(await this.post(`/sessions/${id}/commit`, { ordinal, agent }));
  }

  async trace(id: string): Promise<Trace> {
    return parse(await fetch(`${this.baseUrl}/sessions/${id}/trace`));
  }
}
