use std::fs;
use std::path::{Path, PathBuf};

use e2ee_core::crypto::{generate_keypair, KeyPair, MasterKey};
use e2ee_core::file_format::{create_encrypted_file, grant, revoke, Access, EncryptedFile, OwnerKeys, Permission};
use e2ee_core::freshness::{update_tree, verify_tree, OwnerHeaders, Violation, ViolationKind, FHF_FILE_NAME};
use rand::rngs::OsRng;
use rand::Rng;
use tempfile::TempDir;

struct Owner {
    kp: KeyPair,
    mk: MasterKey,
}

impl Owner {
    fn new() -> Self {
        Owner { kp: generate_keypair(&mut OsRng), mk: MasterKey::generate(&mut OsRng) }
    }
    fn keys(&self) -> OwnerKeys<'_> {
        OwnerKeys { keypair: &self.kp, master_key: &self.mk }
    }
    fn headers(&self) -> OwnerHeaders<'_> {
        OwnerHeaders { master_key: &self.mk, owners: vec![self.kp.public()] }
    }
}

/// root/{a.e2ef, sub/{b.e2ef, deep/{c.e2ef}}, other/{d.e2ef}}
fn build_tree(o: &Owner) -> (TempDir, Vec<PathBuf>) {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();
    let files = [
        root.join("a.e2ef"),
        root.join("sub/b.e2ef"),
        root.join("sub/deep/c.e2ef"),
        root.join("other/d.e2ef"),
    ];
    for f in &files {
        fs::create_dir_all(f.parent().unwrap()).unwrap();
        let enc = create_encrypted_file(f.to_string_lossy().as_bytes(), o.keys(), &mut OsRng).unwrap();
        fs::write(f, enc.to_bytes()).unwrap();
    }
    (tmp, files.to_vec())
}

fn ancestors_of(file: &Path, root: &Path) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = file.ancestors().skip(1).take_while(|p| p.starts_with(root)).map(Path::to_path_buf).collect();
    out.sort();
    out
}

#[test]
fn fresh_tree_has_no_violations() {
    let o = Owner::new();
    let (tmp, _) = build_tree(&o);
    let updated = update_tree(tmp.path(), &o.mk, 1_000, 300, &o.headers()).unwrap();
    assert_eq!(updated.len(), 4);
    for max_age in [1, 300, u64::MAX] {
        assert!(verify_tree(tmp.path(), &o.mk, max_age, 1_000, &o.headers()).unwrap().is_empty());
    }
    // Unchanged roots within the interval are not restamped.
    assert!(update_tree(tmp.path(), &o.mk, 1_100, 300, &o.headers()).unwrap().is_empty());
    assert_eq!(update_tree(tmp.path(), &o.mk, 1_300, 300, &o.headers()).unwrap().len(), 4);
}

#[test]
fn header_rollback_flags_directory_and_ancestors() {
    let o = Owner::new();
    let mallory = generate_keypair(&mut OsRng);
    let (tmp, files) = build_tree(&o);
    let target = &files[2];

    // Mallory gets write access; save that header, then the owner revokes.
    let f = EncryptedFile::parse(&fs::read(target).unwrap()).unwrap();
    let granted = grant(&f, o.keys(), &[], &mallory.public(), Permission::ReadWrite, &mut OsRng).unwrap();
    fs::write(target, granted.to_bytes()).unwrap();
    update_tree(tmp.path(), &o.mk, 1_000, 0, &o.headers()).unwrap();
    let saved = granted.to_bytes();

    let revoked = revoke(&granted, o.keys(), &[mallory.public()], &mallory.public(), &mut OsRng).unwrap();
    fs::write(target, revoked.to_bytes()).unwrap();
    update_tree(tmp.path(), &o.mk, 2_000, 0, &o.headers()).unwrap();
    assert!(verify_tree(tmp.path(), &o.mk, 600, 2_000, &o.headers()).unwrap().is_empty());

    // Replay the stale file.
    fs::write(target, &saved).unwrap();
    let v = verify_tree(tmp.path(), &o.mk, 600, 2_000, &o.headers()).unwrap();
    let expected: Vec<Violation> = ancestors_of(target, tmp.path())
        .into_iter()
        .map(|path| Violation { path, kind: ViolationKind::RootMismatch })
        .collect();
    assert_eq!(v, expected);
    assert_eq!(v.len(), 3);
}

#[test]
fn stale_header_spliced_onto_new_content_detected() {
    let o = Owner::new();
    let (tmp, files) = build_tree(&o);
    let target = &files[1];
    let old = EncryptedFile::parse(&fs::read(target).unwrap()).unwrap();
    let u = generate_keypair(&mut OsRng);
    let new = grant(&old, o.keys(), &[], &u.public(), Permission::Read, &mut OsRng).unwrap();
    fs::write(target, new.to_bytes()).unwrap();
    update_tree(tmp.path(), &o.mk, 10, 0, &o.headers()).unwrap();

    let access = Access::Owner { master_key: &o.mk, owner_pk: o.kp.public() };
    let old_header = old.header(&access).unwrap().to_vec();
    let new_bytes = new.to_bytes();
    let new_header_len = new.header(&access).unwrap().len();
    let mut spliced = old_header;
    spliced.extend_from_slice(&new_bytes[new_header_len..]);
    fs::write(target, spliced).unwrap();

    let v = verify_tree(tmp.path(), &o.mk, 600, 10, &o.headers()).unwrap();
    assert!(v.iter().all(|x| x.kind == ViolationKind::RootMismatch));
    assert_eq!(v.iter().map(|x| x.path.clone()).collect::<Vec<_>>(), ancestors_of(target, tmp.path()));
}

#[test]
fn missing_stale_and_forged_stamps() {
    let o = Owner::new();
    let (tmp, _) = build_tree(&o);
    update_tree(tmp.path(), &o.mk, 1_000, 300, &o.headers()).unwrap();

    let stale = verify_tree(tmp.path(), &o.mk, 100, 1_200, &o.headers()).unwrap();
    assert_eq!(stale.len(), 4);
    assert!(stale.iter().all(|v| v.kind == ViolationKind::Stale));

    let deep = tmp.path().join("sub/deep");
    fs::remove_file(deep.join(FHF_FILE_NAME)).unwrap();
    let v = verify_tree(tmp.path(), &o.mk, 600, 1_000, &o.headers()).unwrap();
    assert_eq!(v, vec![Violation { path: deep.clone(), kind: ViolationKind::MissingFhf }]);

    // Stamps made under other keys are always rejected.
    for _ in 0..20 {
        let wrong = MasterKey::generate(&mut OsRng);
        let v = verify_tree(tmp.path(), &wrong, 600, 1_000, &o.headers()).unwrap();
        assert_eq!(v.iter().filter(|v| v.kind == ViolationKind::InvalidTag).count(), 3);
    }
}

#[test]
fn clock_regression_refused() {
    let o = Owner::new();
    let (tmp, _) = build_tree(&o);
    update_tree(tmp.path(), &o.mk, 1_000, 300, &o.headers()).unwrap();
    assert!(update_tree(tmp.path(), &o.mk, 999, 300, &o.headers()).is_err());
}

#[test]
fn any_header_byte_change_propagates() {
    let o = Owner::new();
    let (tmp, files) = build_tree(&o);
    update_tree(tmp.path(), &o.mk, 1, 0, &o.headers()).unwrap();
    let access = Access::Owner { master_key: &o.mk, owner_pk: o.kp.public() };
    let mut rng = OsRng;
    for _ in 0..500 {
        let target = &files[rng.gen_range(0..files.len())];
        let original = fs::read(target).unwrap();
        let header_len = EncryptedFile::parse(&original).unwrap().header(&access).unwrap().len();
        let mut mutated = original.clone();
        let pos = rng.gen_range(0..header_len);
        mutated[pos] ^= rng.gen_range(1..=255u8);
        fs::write(target, &mutated).unwrap();
        let v = verify_tree(tmp.path(), &o.mk, 600, 1, &o.headers()).unwrap();
        let dirs: Vec<_> = v.iter().map(|x| x.path.clone()).collect();
        assert_eq!(dirs, ancestors_of(target, tmp.path()), "byte {pos} of {target:?}");
        fs::write(target, &original).unwrap();
    }
}
