import { describe, expect, it } from "vitest";

import {
  validateAdHocDsm,
  validateApplyPlan,
  validateOutage,
  validateSwitch,
} from "../src/forms.js";
import { applyEvent, hydrateSnapshot, newView } from "../src/model.js";
import { makeEvent, makeSnapshot } from "./helpers.js";

describe("validateSwitch", () => {
  const snap = makeSnapshot({ out_of_service: ["L2"] });

  it("accepts a known line with a legal state", () => {
    expect(validateSwitch({ line_id: "T2", state: "closed" }, snap)).toEqual([]);
    expect(validateSwitch({ line_id: "L3", state: "open" }, snap)).toEqual([]);
  });

  it("rejects unknown lines", () => {
    expect(validateSwitch({ line_id: "NOPE", state: "open" }, snap)).toEqual([
      "unknown line 'NOPE'",
    ]);
  });

  it("rejects states other than open/closed", () => {
    expect(validateSwitch({ line_id: "L3", state: "ajar" }, snap)).toEqual([
      "bad switch state 'ajar'",
    ]);
  });

  it("rejects locked-out lines", () => {
    expect(validateSwitch({ line_id: "L2", state: "closed" }, snap)).toEqual([
      "line 'L2' is out of service",
    ]);
  });
});

describe("validateAdHocDsm", () => {
  const snap = makeSnapshot();
  const good = { building: "FLEX-B", direction: "reduce", magnitude_kw: 50, duration_intervals: 4 };

  it("accepts a well-formed request", () => {
    expect(validateAdHocDsm(good, snap)).toEqual([]);
    expect(validateAdHocDsm({ ...good, start_interval: 0 }, snap)).toEqual([]);
  });

  it("rejects unknown buildings", () => {
    expect(validateAdHocDsm({ ...good, building: "GHOST" }, snap)).toEqual([
      "unknown building 'GHOST'",
    ]);
  });

  it("rejects bad directions", () => {
    expect(validateAdHocDsm({ ...good, direction: "sideways" }, snap)).toEqual([
      "bad direction 'sideways'",
    ]);
  });

  it("rejects negative or non-finite magnitudes", () => {
    expect(validateAdHocDsm({ ...good, magnitude_kw: -1 }, snap)).toEqual([
      "magnitude_kw must be >= 0",
    ]);
    expect(validateAdHocDsm({ ...good, magnitude_kw: Number.NaN }, snap)).toEqual([
      "magnitude_kw must be >= 0",
    ]);
  });

  it("rejects non-positive or fractional durations", () => {
    expect(validateAdHocDsm({ ...good, duration_intervals: 0 }, snap)).toEqual([
      "duration_intervals must be a positive integer",
    ]);
    expect(validateAdHocDsm({ ...good, duration_intervals: 1.5 }, snap)).toEqual([
      "duration_intervals must be a positive integer",
    ]);
  });

  it("rejects negative start intervals", () => {
    expect(validateAdHocDsm({ ...good, start_interval: -1 }, snap)).toEqual([
      "start_interval must be a non-negative integer",
    ]);
  });

  it("collects multiple problems at once", () => {
    const errors = validateAdHocDsm(
      { building: "GHOST", direction: "sideways", magnitude_kw: -2, duration_intervals: 0 },
      snap,
    );
    expect(errors).toHaveLength(4);
  });
});

describe("validateOutage", () => {
  const snap = makeSnapshot();

  it("accepts known lines and buses", () => {
    expect(validateOutage({ element: "L2" }, snap)).toEqual([]);
    expect(validateOutage({ element: "BLDG-B" }, snap)).toEqual([]);
  });

  it("rejects unknown elements", () => {
    expect(validateOutage({ element: "Z9" }, snap)).toEqual(["unknown element 'Z9'"]);
  });

  it("refuses to fail the grid source", () => {
    expect(validateOutage({ element: "GRID" }, snap)).toEqual(["cannot fail the grid source"]);
  });
});

describe("validateApplyPlan", () => {
  it("requires an integer proposal reference", () => {
    const view = newView();
    expect(validateApplyPlan({ proposal_seq: 1.5 }, view)).toEqual([
      "proposal_seq must be an integer",
    ]);
  });

  it("rejects unknown and already-applied proposals", () => {
    const view = newView();
    hydrateSnapshot(view, makeSnapshot({ seq: -1 }));
    expect(validateApplyPlan({ proposal_seq: 4 }, view)).toEqual(["no proposal #4"]);
    applyEvent(
      view,
      makeEvent(4, "restoration_proposed", {
        failed: "L2",
        actions: [["T2", "closed"]],
        restored_buses: ["BLDG-B"],
        unserved_kw: 0.0,
        limit_safe: true,
        proposal_seq: 4,
      }),
    );
    expect(validateApplyPlan({ proposal_seq: 4 }, view)).toEqual([]);
    view.proposals[0]!.applied = true;
    expect(validateApplyPlan({ proposal_seq: 4 }, view)).toEqual([
      "proposal #4 was already applied",
    ]);
  });
});
