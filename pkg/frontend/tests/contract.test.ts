// Contract tests: the API client against the recorded stub server, byte for byte.

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import type { Server } from "node:http";

import { ApiClient } from "../src/api.js";
import { ApiError, ClassesResponse, DiagnosisResult, HealthResponse } from "../src/types.js";
import { fixtureBytes, fixtureJson, fixtureMeta, startStubServer } from "./stub_server.js";

let server: Server;
let baseUrl: string;
let client: ApiClient;

beforeAll(async () => {
    const started = await startStubServer();
    server = started.server;
    baseUrl = started.baseUrl;
    client = new ApiClient(baseUrl);
});

afterAll(() => {
    server.close();
});

function makeImageFile(): File {
    return new File([new Uint8Array([137, 80, 78, 71, 13, 10, 26, 10])], "lesion.png", {
        type: "image/png",
    });
}

describe("recorded responses replay byte-identically", () => {
    it.each(["health", "classes"])("GET %s", async (name) => {
        const response = await fetch(`${baseUrl}/v1/${name}`);
        expect(response.status).toBe(fixtureMeta(name).status);
        const got = Buffer.from(await response.arrayBuffer());
        expect(got.equals(fixtureBytes(name))).toBe(true);
    });

    it("POST diagnose returns the recorded chain trace", async () => {
        const form = new FormData();
        form.append("image", makeImageFile());
        form.append("narrative", "itchy dry skin");
        const response = await fetch(`${baseUrl}/v1/diagnose`, { method: "POST", body: form });
        expect(response.status).toBe(200);
        const got = Buffer.from(await response.arrayBuffer());
        expect(got.equals(fixtureBytes("diagnose_default"))).toBe(true);
    });
});

describe("client parses the contract shapes", () => {
    it("health", async () => {
        const health: HealthResponse = await client.health();
        expect(health.status).toBe("ok");
        expect(health.registry_version).toBe("skin26-v1");
    });

    it("classes has the 26-entry registry", async () => {
        const classes: ClassesResponse = await client.classes();
        expect(classes.classes).toHaveLength(26);
        expect(classes.classes[1]).toEqual({ code: 1, name: "Dermatofibroma" });
    });

    it("diagnose yields the 5-step elimination schedule", async () => {
        const result: DiagnosisResult = await client.diagnose(makeImageFile(), "itchy dry skin", {
            topN: 5,
            k: 5,
            mode: "chain",
        });
        const sizes = result.chain_trace.steps.map((step) => step.remaining_before.length);
        expect(sizes).toEqual([26, 21, 16, 11, 6]);
        expect(result.chain_trace.remaining).toHaveLength(1);
        expect(result.final_class.code).toBe(result.chain_trace.remaining[0]);
        expect(result.image_topn.top).toHaveLength(5);
        const expected = fixtureJson<DiagnosisResult>("diagnose_default");
        expect(result).toEqual(expected);
    });

    it("empty narrative surfaces the structured error", async () => {
        await expect(client.diagnose(makeImageFile(), "   ", { topN: 5, k: 5, mode: "chain" })).rejects.toThrow(
            ApiError,
        );
        try {
            await client.diagnose(makeImageFile(), "   ", { topN: 5, k: 5, mode: "chain" });
        } catch (error) {
            const apiError = error as ApiError;
            expect(apiError.status).toBe(400);
            expect(apiError.code).toBe("empty_narrative");
        }
    });

    it("missing image surfaces invalid_request", async () => {
        const form = new FormData();
        form.append("narrative", "something");
        const response = await fetch(`${baseUrl}/v1/diagnose`, { method: "POST", body: form });
        expect(response.status).toBe(400);
        const got = Buffer.from(await response.arrayBuffer());
        expect(got.equals(fixtureBytes("error_missing_image"))).toBe(true);
    });
});
