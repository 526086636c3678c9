/** Browser entry: bind the session to the DOM and wire the control panel. */

import { mount } from "./render.js";
import { ConsoleSession } from "./session.js";
import type { ScenarioRequest } from "./types.js";

declare global {
  interface Window {
    SLESIM_BASE?: string;
  }
}

function inputValue(form: HTMLElement, name: string): string {
  const input = form.querySelector<HTMLInputElement | HTMLSelectElement>(`[name="${name}"]`);
  return input ? input.value.trim() : "";
}

function bootstrap(): void {
  const root = document.getElementById("app");
  const panel = document.getElementById("panel");
  if (!root || !panel) {
    throw new Error("console shell markup is missing #app or #panel");
  }
  // same-origin by default: the gateway serves this bundle under /ui
  const base = window.SLESIM_BASE ?? "";
  const session = new ConsoleSession(base, {
    onChange: (view) => mount(root, view),
  });

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement | null;
    const button = target?.closest<HTMLElement>("button[data-action]");
    if (!button) {
      return;
    }
    if (button.dataset["action"] === "approve-proposal") {
      void session.approveProposal(Number(button.dataset["proposalSeq"]));
    } else if (button.dataset["action"] === "commit-scenario") {
      void session.commitScenario();
    }
  });

  panel.addEventListener("submit", (event) => {
    event.preventDefault();
    const form = event.target as HTMLFormElement;
    switch (form.dataset["form"]) {
      case "switch": {
        void session.submitAction({
          kind: "switch_action",
          payload: {
            line_id: inputValue(form, "line_id"),
            state: inputValue(form, "state"),
          },
        });
        break;
      }
      case "dsm": {
        void session.submitAction({
          kind: "ad_hoc_dsm",
          payload: {
            building: inputValue(form, "building"),
            direction: inputValue(form, "direction"),
            magnitude_kw: Number(inputValue(form, "magnitude_kw")),
            duration_intervals: Number(inputValue(form, "duration_intervals")),
          },
        });
        break;
      }
      case "outage": {
        void session.submitAction({
          kind: "inject_outage",
          payload: { element: inputValue(form, "element") },
        });
        break;
      }
      case "scenario": {
        const request: ScenarioRequest = { name: inputValue(form, "name") || "what-if" };
        const rerate = inputValue(form, "rerate_asset");
        const rating = inputValue(form, "rerate_kw");
        if (rerate && rating) {
          request.rerate_assets = { [rerate]: Number(rating) };
        }
        const switchLine = inputValue(form, "switch_line");
        const switchState = inputValue(form, "switch_state");
        if (switchLine && switchState) {
          request.switch_overrides = { [switchLine]: switchState };
        }
        void session.runWhatIf(request);
        break;
      }
      default:
        break;
    }
  });

  void session.connect().catch((error) => {
    session.view.lastError = String(error);
    session.view.connection = "reconnecting";
    mount(root, session.view);
  });
}

bootstrap();
