/** Client-side validation mirroring the service's action rules.
 *
 * The service remains the authority; these checks only pre-empt round trips
 * for input the gateway is guaranteed to reject, using the same predicates.
 */

import type { ConsoleView } from "./model.js";
import type { NetworkDoc, Snapshot } from "./types.js";

export interface SwitchForm {
  line_id: string;
  state: string;
}

export interface AdHocDsmForm {
  building: string;
  direction: string;
  magnitude_kw: number;
  duration_intervals: number;
  start_interval?: number;
}

export interface OutageForm {
  element: string;
}

export interface ApplyPlanForm {
  proposal_seq: number;
}

function lineIds(net: NetworkDoc): Set<string> {
  return new Set(net.lines.map((l) => l.id));
}

export function validateSwitch(form: SwitchForm, snap: Snapshot): string[] {
  const errors: string[] = [];
  if (!lineIds(snap.topology).has(form.line_id)) {
    errors.push(`unknown line '${form.line_id}'`);
  }
  if (form.state !== "open" && form.state !== "closed") {
    errors.push(`bad switch state '${form.state}'`);
  }
  if (snap.out_of_service.includes(form.line_id)) {
    errors.push(`line '${form.line_id}' is out of service`);
  }
  return errors;
}

export function validateAdHocDsm(form: AdHocDsmForm, snap: Snapshot): string[] {
  const errors: string[] = [];
  if (!(form.building in snap.buildings)) {
    errors.push(`unknown building '${form.building}'`);
  }
  if (!["increase", "reduce", "balance"].includes(form.direction)) {
    errors.push(`bad direction '${form.direction}'`);
  }
  if (!Number.isFinite(form.magnitude_kw) || form.magnitude_kw < 0) {
    errors.push("magnitude_kw must be >= 0");
  }
  if (!Number.isInteger(form.duration_intervals) || form.duration_intervals <= 0) {
    errors.push("duration_intervals must be a positive integer");
  }
  if (form.start_interval !== undefined) {
    if (!Number.isInteger(form.start_interval) || form.start_interval < 0) {
      errors.push("start_interval must be a non-negative integer");
    }
  }
  return errors;
}

export function validateOutage(form: OutageForm, snap: Snapshot): string[] {
  const errors: string[] = [];
  const net = snap.topology;
  const known = lineIds(net).has(form.element) || net.buses.some((b) => b.id === form.element);
  if (!known) {
    errors.push(`unknown element '${form.element}'`);
  }
  const source = net.buses.find((b) => b.kind === "grid_source");
  if (source && form.element === source.id) {
    errors.push("cannot fail the grid source");
  }
  return errors;
}

export function validateApplyPlan(form: ApplyPlanForm, view: ConsoleView): string[] {
  const errors: string[] = [];
  if (!Number.isInteger(form.proposal_seq)) {
    errors.push("proposal_seq must be an integer");
    return errors;
  }
  const proposal = view.proposals.find((p) => p.proposalSeq === form.proposal_seq);
  if (!proposal) {
    errors.push(`no proposal #${form.proposal_seq}`);
  } else if (proposal.applied) {
    errors.push(`proposal #${form.proposal_seq} was already applied`);
  }
  return errors;
}
