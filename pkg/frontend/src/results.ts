/**
 * Result-check flow: registration number + identity + scratch-card PIN in,
 * one of four screens out. All numbers shown come straight from the service;
 * nothing is recomputed client-side.
 */

import { ApiError, ExamApi, ResultPayload, TransportError } from "./api.js";

export type ResultView =
  | { kind: "score"; payload: ResultPayload }
  | { kind: "embargo"; releaseTime: string | null; message: string }
  | { kind: "not-final"; message: string }
  | { kind: "error"; code: string; message: string; retriable: boolean };

/** The embargo refusal names its lift time: "results release at <iso>". */
export function releaseTimeFromMessage(message: string): string | null {
  const m = /release at (\S+)/.exec(message);
  if (!m) return null;
  const iso = m[1];
  return Number.isNaN(Date.parse(iso)) ? null : iso;
}

export async function checkResult(
  api: ExamApi,
  regNo: string,
  identityNo: string,
  pin: string,
): Promise<ResultView> {
  try {
    const payload = await api.checkResult(regNo, identityNo, pin);
    return { kind: "score", payload };
  } catch (err) {
    if (err instanceof ApiError) {
      if (err.code === "EmbargoActive") {
        return {
          kind: "embargo",
          releaseTime: releaseTimeFromMessage(err.message),
          message: err.message,
        };
      }
      if (err.code === "ResultNotFinal") {
        return { kind: "not-final", message: err.message };
      }
      return {
        kind: "error",
        code: err.code,
        message: err.message,
        retriable: err.retriable,
      };
    }
    if (err instanceof TransportError) {
      return { kind: "error", code: "Unreachable", message: err.message,
               retriable: true };
    }
    throw err;
  }
}
