/** Login screen and role routing. The API key lives in memory only. */

import { ApiClient } from "./api.js";
import { clear, el } from "./dom.js";
import { renderError, renderPatientDashboard } from "./patient.js";
import { renderProviderDashboard } from "./provider.js";

const root = document.getElementById("app")!;

function renderLogin(): void {
  clear(root);
  const input = el("input", { placeholder: "paste your API key", id: "api-key", type: "password" });
  const button = el("button", {}, ["Sign in"]);
  const message = el("div");
  button.addEventListener("click", async () => {
    const client = new ApiClient("", input.value.trim());
    try {
      const session = await client.whoami();
      clear(root);
      const signOut = el("button", { class: "small signout" }, ["sign out"]);
      signOut.addEventListener("click", () => renderLogin());
      root.append(signOut);
      if (session.role === "patient") {
        renderPatientDashboard(root, client, session);
      } else if (session.role === "provider") {
        renderProviderDashboard(root, client, session);
      } else {
        root.append(el("p", {}, ["admin keys operate via the CLI and admin endpoints; the portal serves patients and providers"]));
      }
    } catch (err) {
      clear(message);
      message.append(renderError(err));
    }
  });
  root.append(
    el("h1", {}, ["Health record portal"]),
    el("p", { class: "muted" }, ["records live off-chain; the ledger stores digests, permissions, and events"]),
    el("div", { class: "row" }, [input, button]),
    message,
  );
}

renderLogin();
