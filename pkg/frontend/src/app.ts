/**
 * Console wiring: one active session per tab, what-if-first, every mutation
 * round-trips to the service before anything re-renders.
 */

import { ApiClient, ServiceError } from './client.js';
import {
  renderCapacityBoard,
  renderError,
  renderHistory,
  renderRecommendation,
  renderTrace,
} from './render.js';
import type { MechanismBody, Recommendation, SessionState } from './types.js';

const $ = <T extends HTMLElement>(sel: string): T => {
  const el = document.querySelector(sel);
  if (!el) throw new Error(`missing element ${sel}`);
  return el as T;
};

const client = new ApiClient('');
let session: SessionState | null = null;
let probe: Recommendation | null = null; // latest what-if, kept for the commit step
let probeVector: number[] | null = null;
let committing = false;

function parseNumbers(text: string): number[] | null {
  const parts = text.split(/[\s,]+/).filter((p) => p.length > 0);
  const values = parts.map(Number);
  return values.every(Number.isFinite) ? values : null;
}

function paint(): void {
  if (!session) return;
  $('#board').innerHTML = renderCapacityBoard(session);
  $('#history').innerHTML = renderHistory(session);
  $<HTMLFieldSetElement>('#arrival-fields').disabled = session.closed;
  $('#session-id').textContent = session.id;
}

function showError(err: unknown): void {
  if (err instanceof ServiceError) {
    $('#messages').innerHTML = renderError(err.envelope);
  } else {
    $('#messages').textContent = String(err);
  }
}

async function refresh(): Promise<void> {
  if (!session) return;
  session = await client.getSession(session.id);
  paint();
}

async function createSession(): Promise<void> {
  const agents = $<HTMLInputElement>('#agents').value.split(',').map((a) => a.trim());
  const capacity = parseNumbers($<HTMLInputElement>('#capacity').value);
  const n = Number($<HTMLInputElement>('#n').value);
  const seed = Number($<HTMLInputElement>('#seed').value || '0');
  const poolRows = $<HTMLTextAreaElement>('#pool').value
    .split('\n')
    .map((line) => parseNumbers(line))
    .filter((row): row is number[] => row !== null && row.length > 0);
  const mechanism: MechanismBody = { kind: $<HTMLSelectElement>('#kind').value as MechanismBody['kind'] };
  const draws = $<HTMLInputElement>('#draws').value;
  if (draws) mechanism.n_draws = Number(draws);
  if (!capacity || capacity.length !== agents.length) {
    $('#messages').textContent = 'capacity must list one integer per agent';
    return;
  }
  try {
    session = await client.createSession({ agents, capacity, pool: poolRows, n, mechanism, seed });
    probe = null;
    probeVector = null;
    $('#messages').textContent = '';
    $('#recommendation').innerHTML = '';
    $('#trace').innerHTML = '';
    paint();
  } catch (err) {
    showError(err);
  }
}

async function submitArrival(): Promise<void> {
  if (!session) return;
  const vector = parseNumbers($<HTMLInputElement>('#vector').value);
  if (!vector || vector.length !== session.agents.length) {
    // malformed input never leaves the page
    $('#messages').textContent = `enter ${session.agents.length} finite numbers`;
    return;
  }
  try {
    probe = await client.recommend(session.id, vector, true);
    probeVector = vector;
    $('#messages').textContent = '';
    $('#recommendation').innerHTML = renderRecommendation(probe, session);
  } catch (err) {
    showError(err);
  }
}

async function commitTo(agent: string): Promise<void> {
  if (!session || !probeVector || committing) return;
  committing = true;
  try {
    // arm: the recorded recommendation the commit is judged against
    const armed = await client.recommend(session.id, probeVector, false);
    await client.commit(session.id, armed.ordinal, agent);
    probe = null;
    probeVector = null;
    $<HTMLInputElement>('#vector').value = '';
    $('#recommendation').innerHTML = '';
    $('#messages').textContent = '';
    await refresh();
  } catch (err) {
    showError(err);
  } finally {
    committing = false;
  }
}

async function showTrace(): Promise<void> {
  if (!session) return;
  try {
    $('#trace').innerHTML = renderTrace(await client.trace(session.id));
  } catch (err) {
    showError(err);
  }
}

export function wire(): void {
  $('#create').addEventListener('click', () => void createSession());
  $('#probe').addEventListener('click', () => void submitArrival());
  $('#show-trace').addEventListener('click', () => void showTrace());
  $('#recommendation').addEventListener('click', (ev) => {
    const target = ev.target as HTMLElement;
    if (target.matches('button.commit') && !target.hasAttribute('disabled')) {
      void commitTo(target.dataset.agent ?? '');
    }
  });
  $('#messages').addEventListener('click', (ev) => {
    if ((ev.target as HTMLElement).matches('button.refresh-retry')) {
      void refresh().then(() => {
        $('#messages').textContent = '';
      });
    }
  });
}

wire();
