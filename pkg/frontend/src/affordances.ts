/** Permission-derived UI affordances.
 *
 * The console computes nothing about authority itself: the server's schema
 * listing carries the caller's effective permission string, and this maps
 * the string onto enabled/disabled controls. Forced requests still hit the
 * server's own checks and surface its 403.
 */

export interface Affordances {
  create: boolean;
  read: boolean;
  update: boolean;
  delete: boolean;
}

export function affordancesFrom(permissions: string): Affordances {
  const set = new Set(permissions.toUpperCase().split(""));
  return {
    create: set.has("C"),
    read: set.has("R"),
    update: set.has("U"),
    delete: set.has("D"),
  };
}

export const NO_AFFORDANCES: Affordances = {
  create: false,
  read: false,
  update: false,
  delete: false,
};
