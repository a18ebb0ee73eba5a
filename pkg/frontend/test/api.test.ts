import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient, GatewayError } from "../src/api.js";
import { ScriptedGateway } from "./scripted_gateway.js";

let gateway: ScriptedGateway;
let api: ApiClient;

beforeEach(() => {
  gateway = new ScriptedGateway();
  api = new ApiClient("http://gw", gateway.fetchImpl());
});

describe("ApiClient", () => {
  it("holds no session before login and rejects calls with 401", async () => {
    expect(api.authenticated).toBe(false);
    await expect(api.alerts()).rejects.toThrowError(GatewayError);
    await expect(api.alerts()).rejects.toMatchObject({ status: 401 });
  });

  it("logs in and sends the bearer token afterwards", async () => {
    const session = await api.login("ana.alvarez", "alpha-secret");
    expect(session.irt_class).toBe("A");
    expect(api.authenticated).toBe(true);
    const alerts = await api.alerts();
    expect(alerts).toEqual([]);
  });

  it("surfaces invalid credentials as a 401 GatewayError", async () => {
    await expect(api.login("ana.alvarez", "wrong")).rejects.toMatchObject({
      status: 401,
      body: { error: "invalid-credentials" },
    });
    expect(api.authenticated).toBe(false);
  });

  it("drops the token on logout", async () => {
    await api.login("ana.alvarez", "alpha-secret");
    api.logout();
    await expect(api.alerts()).rejects.toMatchObject({ status: 401 });
  });

  it("maps unknown incidents to 404 errors", async () => {
    await api.login("ana.alvarez", "alpha-secret");
    await expect(api.incident("inc_missing")).rejects.toMatchObject({ status: 404 });
  });

  it("fetches the server transition table", async () => {
    const doc = await api.transitionTable();
    expect(doc.transitions["New"]).toEqual(["ack"]);
  });
});
