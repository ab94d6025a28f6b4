import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, FetchLike } from "../src/api.js";

function mockFetch(
  handler: (url: string, init?: RequestInit) => { status: number; body: unknown },
): { fetch: FetchLike; calls: { url: string; body: unknown }[] } {
  const calls: { url: string; body: unknown }[] = [];
  const fetch: FetchLike = async (url, init) => {
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    calls.push({ url, body });
    const res = handler(url, init);
    return new Response(JSON.stringify(res.body), {
      status: res.status,
      headers: { "content-type": "application/json" },
    });
  };
  return { fetch, calls };
}

describe("ApiClient", () => {
  it("posts the documented payloads to the documented endpoints", async () => {
    const { fetch, calls } = mockFetch((url) => {
      if (url.endsWith("/encode")) return { status: 200, body: { z: [1, 2] } };
      if (url.endsWith("/decode")) return { status: 200, body: { text: "hi" } };
      if (url.endsWith("/interpolate")) return { status: 200, body: { rows: [] } };
      return { status: 200, body: { z_d: [0], text: "t" } };
    });
    const client = new ApiClient("http://api", fetch);

    expect((await client.encode("a cat sees")).z).toEqual([1, 2]);
    expect((await client.decode([1, 2])).text).toBe("hi");
    await client.interpolate("s1", "s2");
    await client.arith("a", "b", "c");

    expect(calls.map((c) => c.url)).toEqual([
      "http://api/encode",
      "http://api/decode",
      "http://api/interpolate",
      "http://api/arith",
    ]);
    expect(calls[0].body).toEqual({ text: "a cat sees" });
    expect(calls[1].body).toEqual({ z: [1, 2] });
    expect(calls[2].body).toEqual({ a: "s1", b: "s2", steps: 11 });
    expect(calls[3].body).toEqual({ a: "a", b: "b", c: "c" });
  });

  it("raises ApiError carrying the server status and message", async () => {
    const { fetch } = mockFetch(() => ({
      status: 413,
      body: { error: "too long" },
    }));
    const client = new ApiClient("http://api", fetch);
    const err = await client.encode("x".repeat(999)).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(413);
    expect(err.message).toBe("too long");
  });
});
