import { readFileSync } from "node:fs";

import { FetchLike } from "../src/api";

/** Responses recorded from the real service against the 10-feature fixture
 * snapshot (see tests/fixtures/). Keyed by exact path + query string. */
const recorded: Record<string, unknown> = JSON.parse(
  readFileSync(new URL("./fixtures/responses.json", import.meta.url), "utf-8"),
);

export function recordedFetch(log: string[] = []): FetchLike {
  return async (url: string) => {
    log.push(url);
    if (url in recorded) {
      return {
        ok: true,
        status: 200,
        json: async () => structuredClone(recorded[url]),
      };
    }
    return { ok: false, status: 404, json: async () => ({ detail: url }) };
  };
}

export function recordedResponse<T>(url: string): T {
  if (!(url in recorded)) throw new Error(`not recorded: ${url}`);
  return structuredClone(recorded[url]) as T;
}
