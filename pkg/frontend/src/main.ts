// Entry point for the static bundle served by the gateway under /console.
// ?session=<id> joins an existing session; otherwise a new one is created.

import { GatewayClient } from "./api";
import { SessionScreen } from "./console";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get("gateway") ?? window.location.origin;
  const client = new GatewayClient(baseUrl);
  const screen = await SessionScreen.create(root, client, {
    sessionId: params.get("session") ?? undefined,
    pollMs: 1000,
  });
  const url = new URL(window.location.href);
  url.searchParams.set("session", screen.sessionId);
  window.history.replaceState(null, "", url.toString());
}

void boot().catch((error) => {
  const root = document.getElementById("app");
  if (root) root.textContent = `failed to start console: ${error}`;
});
