/**
 * Pure HTML-string renderers. Every number shown comes straight out of a
 * service response — the only arithmetic here is presentational bar scaling.
 */

import type { Recommendation, SessionState, Trace, ErrorEnvelope } from './types.js';

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

const score = (x: number): string => x.toFixed(4);

export function renderCapacityBoard(state: SessionState): string {
  const rows = state.agents
    .map((agent, i) => {
      const remaining = state.capacity_remaining[i];
      const cls = remaining === 0 ? ' class="exhausted"' : '';
      return `<tr${cls} data-agent="${escapeHtml(agent)}"><td>${escapeHtml(agent)}</td>` +
        `<td>${state.capacity_initial[i]}</td>` +
        `<td class="remaining">${remaining}</td></tr>`;
    })
    .join('');
  const status = state.closed
    ? '<span class="badge closed">closed</span>'
    : `<span class="badge open">arrival ${state.commits.length + 1} of ${state.n}</span>`;
  return (
    `<div class="board">${status}` +
    `<table><thead><tr><th>agent</th><th>initial</th><th>remaining</th></tr></thead>` +
    `<tbody>${rows}</tbody></table></div>`
  );
}

export function renderRecommendation(rec: Recommendation, state: SessionState): string {
  const values = Object.values(rec.per_agent_score);
  const top = Math.max(...values.map(Math.abs), 1e-12);
  const rows = state.agents
    .map((agent, i) => {
      const s = rec.per_agent_score[agent];
      const remaining = state.capacity_remaining[i];
      const disabled = remaining === 0 ? ' disabled' : '';
      const button =
        `<button class="commit" data-agent="${escapeHtml(agent)}"` +
        `${disabled}>commit</button>`;
      if (s === undefined) {
        return `<div class="agent-row unavailable" data-agent="${escapeHtml(agent)}">` +
          `<span class="name">${escapeHtml(agent)}</span><span class="bar"></span>` +
          `<span class="value">&mdash;</span>${button}</div>`;
      }
      const chosen = agent === rec.chosen_agent ? ' chosen' : '';
      const width = Math.round((Math.abs(s) / top) * 100);
      return `<div class="agent-row${chosen}" data-agent="${escapeHtml(agent)}">` +
        `<span class="name">${escapeHtml(agent)}</span>` +
        `<span class="bar"><i style="width:${width}%"></i></span>` +
        `<span class="value">${score(s)}</span>${button}</div>`;
    })
    .join('');
  const loss = rec.expected_loss === null
    ? ''
    : `<div class="loss">expected loss ${score(rec.expected_loss)}</div>`;
  const mode = rec.what_if ? '<span class="badge whatif">what-if</span>' : '';
  return (
    `<div class="recommendation" data-chosen="${escapeHtml(rec.chosen_agent)}">` +
    `<div class="headline">recommends <b class="chosen-agent">${escapeHtml(rec.chosen_agent)}</b>` +
    ` for arrival ${rec.ordinal} ${mode}</div>` +
    `${rows}${loss}<div class="draws">${rec.draws} draws</div></div>`
  );
}

export function renderHistory(state: SessionState): string {
  if (state.commits.length === 0) {
    return '<div class="history empty">no commitments yet</div>';
  }
  const rows = state.commits
    .map((c) => {
      const override = c.recommended !== null && c.agent !== c.recommended;
      const badge = override ? ' <span class="badge override">override</span>' : '';
      const rec = c.recommended === null ? '&mdash;' : escapeHtml(c.recommended);
      return `<tr><td>${c.ordinal}</td><td>${escapeHtml(c.agent)}${badge}</td><td>${rec}</td></tr>`;
    })
    .join('');
  return (
    `<table class="history"><thead><tr><th>#</th><th>decision</th><th>recommended</th></tr>` +
    `</thead><tbody>${rows}</tbody></table>`
  );
}

export function renderTrace(trace: Trace): string {
  const rows = trace.events
    .map((e) => {
      const p = e.payload;
      let detail = '';
      if (e.kind === 'genesis') {
        detail = `session opened: ${(p.agents as string[]).length} agents, n=${p.n}`;
      } else if (e.kind === 'recommend') {
        detail = `arrival ${p.ordinal}: recommended <b>${escapeHtml(String(p.chosen_agent))}</b>`;
      } else {
        const recommended = p.recommended === null ? '&mdash;' : escapeHtml(String(p.recommended));
        const override = p.recommended !== null && p.agent !== p.recommended;
        detail =
          `arrival ${p.ordinal}: committed <b class="decision">${escapeHtml(String(p.agent))}</b>` +
          ` (recommended <span class="recommended">${recommended}</span>)` +
          (override ? ' <span class="badge override">override</span>' : '');
      }
      return `<tr class="${e.kind}"><td>${e.seq}</td><td>${e.kind}</td><td>${detail}</td></tr>`;
    })
    .join('');
  return (
    `<table class="trace"><thead><tr><th>seq</th><th>kind</th><th>event</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>`
  );
}

export function renderError(env: ErrorEnvelope): string {
  const retry = env.code === 'stale_ordinal'
    ? '<button class="refresh-retry">refresh and retry</button>'
    : '';
  return (
    `<div class="error" data-code="${env.code}">` +
    `<b>${env.code}</b> ${escapeHtml(env.message)}${retry}</div>`
  );
}
