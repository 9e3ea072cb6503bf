/**
 * Entry point: wires the hash route to a screen.
 *
 *   #/            candidate sign-in and exam
 *   #/results     scratch-card result check
 *   #/invigilate/<sitting-id>   hall console
 *   #/admin       open sittings and watch progress
 *
 * Service origin and launcher-measured lockdown facts arrive through the
 * window.EXAM_BOOT object the sanctioned boot environment injects; falling
 * back to same-origin keeps the dev loop simple.
 */

import { ApiError, ExamApi } from "./api.js";
import { CandidatePage, PageConfig } from "./candidate-page.js";
import { InvigilatorConsole, formatCounts, rosterRowsHtml } from "./invigilator.js";
import { checkResult } from "./results.js";

interface BootConfig extends PageConfig {
  serviceOrigin?: string;
}

declare global {
  interface Window {
    EXAM_BOOT?: BootConfig;
  }
}

function mount(): void {
  const root = document.getElementById("app");
  if (!root) return;
  const boot = window.EXAM_BOOT ?? {};
  const api = new ExamApi(boot.serviceOrigin ?? "");
  const route = window.location.hash;

  if (route.startsWith("#/results")) {
    renderResultsPage(root, api);
  } else if (route.startsWith("#/invigilate/")) {
    const sittingId = decodeURIComponent(route.slice("#/invigilate/".length));
    renderInvigilatorPage(root, api, sittingId);
  } else if (route.startsWith("#/admin")) {
    renderAdminPage(root, boot.serviceOrigin ?? "");
  } else {
    new CandidatePage(root, api, boot).start();
  }
}

function renderResultsPage(root: HTMLElement, api: ExamApi): void {
  root.textContent = "";
  const pane = document.createElement("section");
  pane.id = "results-page";
  pane.innerHTML = `
    <h1>Result check</h1>
    <form id="result-form">
      <input id="res-reg-no" placeholder="registration number">
      <input id="res-identity" placeholder="identity number" type="password">
      <input id="res-pin" placeholder="scratch card PIN" type="password">
      <button type="submit">Check</button>
    </form>
    <div id="result-view"></div>`;
  root.append(pane);
  const form = pane.querySelector("form")!;
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const val = (id: string) =>
      (pane.querySelector(`#${id}`) as HTMLInputElement).value.trim();
    void checkResult(api, val("res-reg-no"), val("res-identity"), val("res-pin"))
      .then((view) => {
        const out = pane.querySelector("#result-view")!;
        if (view.kind === "score") {
          const p = view.payload;
          out.innerHTML = `
            <table id="score-table">
              <tr><td>candidate</td><td>${p.reg_no}</td></tr>
              <tr><td>exam</td><td>${p.exam_id}</td></tr>
              <tr><td>objective</td><td>${p.objective_marks}</td></tr>
              <tr><td>essay</td><td>${p.essay_marks_total}</td></tr>
              <tr><td>total</td><td>${p.total} / ${p.max_total}</td></tr>
            </table>`;
        } else if (view.kind === "embargo") {
          out.textContent = view.releaseTime
            ? `Results are embargoed; they release at ${view.releaseTime}.`
            : view.message;
        } else if (view.kind === "not-final") {
          out.textContent = "Marking is still in progress; try again later.";
        } else {
          out.textContent = `${view.code}: ${view.message}`;
        }
      });
  });
}

function renderInvigilatorPage(root: HTMLElement, api: ExamApi,
                               sittingId: string): void {
  root.textContent = "";
  const pane = document.createElement("section");
  pane.id = "invigilator-page";
  pane.innerHTML = `
    <h1>Sitting ${sittingId}</h1>
    <div id="image-check">
      <input id="observed-index" placeholder="image number" inputmode="numeric">
      <input id="observed-code" placeholder="confirm code">
      <button id="confirm-image" type="button">Image matches</button>
      <button id="report-mismatch" type="button">Report mismatch</button>
      <span id="confirm-outcome"></span>
    </div>
    <p id="counts"></p>
    <table id="roster"><tbody></tbody></table>`;
  root.append(pane);

  const console_ = new InvigilatorConsole(api, sittingId, {
    onStatus: (status) => {
      pane.querySelector("#counts")!.textContent = formatCounts(status.counts);
      pane.querySelector("#roster tbody")!.innerHTML =
        rosterRowsHtml(status.candidates);
    },
  });
  const sendObservation = () => {
    const idx = Number((pane.querySelector("#observed-index") as HTMLInputElement).value);
    const code = (pane.querySelector("#observed-code") as HTMLInputElement).value.trim();
    void console_.confirmImage(idx, code)
      .then((resp) => {
        pane.querySelector("#confirm-outcome")!.textContent = resp.outcome;
      })
      .catch((err) => {
        pane.querySelector("#confirm-outcome")!.textContent =
          err instanceof ApiError ? `${err.code}` : "unreachable";
      });
  };
  // both buttons file the observation as typed; the service, which derived
  // the image, is the one that rules confirmed or mismatch
  pane.querySelector("#confirm-image")!.addEventListener("click", sendObservation);
  pane.querySelector("#report-mismatch")!.addEventListener("click", sendObservation);
  void console_.refresh().catch(() => undefined);
  console_.startPolling();
}

function renderAdminPage(root: HTMLElement, origin: string): void {
  root.textContent = "";
  const pane = document.createElement("section");
  pane.id = "admin-page";
  pane.innerHTML = `
    <h1>Sitting administration</h1>
    <div>
      <input id="admin-token" placeholder="admin token" type="password">
      <input id="admin-sitting" placeholder="sitting id">
      <button id="open-sitting" type="button">Open sitting</button>
      <button id="refresh-progress" type="button">Refresh progress</button>
    </div>
    <p id="admin-outcome"></p>
    <p id="admin-counts"></p>
    <table id="admin-roster"><tbody></tbody></table>`;
  root.append(pane);

  const input = (id: string) =>
    (pane.querySelector(`#${id}`) as HTMLInputElement).value.trim();
  const outcome = pane.querySelector("#admin-outcome")!;

  pane.querySelector("#open-sitting")!.addEventListener("click", () => {
    const api = new ExamApi(origin, { adminToken: input("admin-token") });
    void api.openSitting(input("admin-sitting"))
      .then((ready) => {
        outcome.textContent =
          `opened ${ready.sitting_id}: ${ready.exam_id}, `
          + `${ready.duration_minutes} minutes, image `
          + `${ready.security_image.image_index} `
          + `(${ready.security_image.glyph_name})`;
      })
      .catch((err) => {
        outcome.textContent =
          err instanceof ApiError ? `${err.code}: ${err.message}` : "unreachable";
      });
  });

  pane.querySelector("#refresh-progress")!.addEventListener("click", () => {
    const api = new ExamApi(origin);
    void api.sittingStatus(input("admin-sitting"))
      .then((status) => {
        pane.querySelector("#admin-counts")!.textContent =
          formatCounts(status.counts);
        pane.querySelector("#admin-roster tbody")!.innerHTML =
          rosterRowsHtml(status.candidates);
      })
      .catch((err) => {
        outcome.textContent =
          err instanceof ApiError ? `${err.code}: ${err.message}` : "unreachable";
      });
  });
}

window.addEventListener("hashchange", mount);
document.addEventListener("DOMContentLoaded", mount);
