/** Error taxonomy mapped to process exit codes. */

export const EXIT_OK = 0
export const EXIT_USAGE = 1
export const EXIT_DATA = 2
export const EXIT_MODEL = 3

/** Bad flags or arguments; exits with usage text. */
export class UsageError extends Error {}

/** Unreadable or malformed input data (videos, images). */
export class DataError extends Error {}

/** A feature-extraction model could not be loaded or applied. */
export class ModelError extends Error {}

export function exitCodeFor(err: unknown): number {
  if (err instanceof UsageError) return EXIT_USAGE
  if (err instanceof DataError) return EXIT_DATA
  if (err instanceof ModelError) return EXIT_MODEL
  return EXIT_DATA
}
