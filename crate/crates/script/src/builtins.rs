//! Standard library: Object, Array, String, Number, Math, JSON, Promise,
//! Map, Set, errors and console.

use std::cell::{Cell, RefCell};
use std::cmp::Ordering;
use std::rc::Rc;

use serde_json::Value as Json;

use crate::host::ConsoleLevel;
use crate::inspect::{format_args, inspect};
use crate::interp::{js_pow, object_from, Interp, R};
use crate::number::*;
use crate::value::*;

fn arg(args: &[Value], i: usize) -> Value {
    args.get(i).cloned().unwrap_or(Value::Undefined)
}

fn method(it: &mut Interp, target: ObjId, name: &'static str, f: NativeFn) {
    let id = it.new_native(name, f, None).expect("builtin allocation");
    it.obj_mut(target).props.insert(Rc::from(name), Value::Obj(id));
}

fn constant(it: &mut Interp, target: ObjId, name: &'static str, v: Value) {
    it.obj_mut(target).props.insert(Rc::from(name), v);
}

fn proto_object(it: &mut Interp, proto: Option<ObjId>) -> ObjId {
    it.alloc(Object::new(proto, ObjKind::Ordinary)).expect("builtin allocation")
}

fn constructor(
    it: &mut Interp,
    name: &'static str,
    call: NativeFn,
    construct: Option<NativeFn>,
    proto: ObjId,
) -> ObjId {
    let f = it.new_native(name, call, construct).expect("builtin allocation");
    it.obj_mut(f).props.insert(Rc::from("prototype"), Value::Obj(proto));
    it.obj_mut(proto).props.insert(Rc::from("constructor"), Value::Obj(f));
    it.globals.insert(name, Value::Obj(f));
    f
}

pub(crate) fn install(it: &mut Interp) {
    let object = proto_object(it, None);
    it.protos.object = object;
    let function = proto_object(it, Some(object));
    it.protos.function = function;
    let array = proto_object(it, Some(object));
    it.protos.array = array;
    let string = proto_object(it, Some(object));
    it.protos.string = string;
    let number = proto_object(it, Some(object));
    it.protos.number = number;
    let boolean = proto_object(it, Some(object));
    it.protos.boolean = boolean;
    let promise = proto_object(it, Some(object));
    it.protos.promise = promise;
    let map = proto_object(it, Some(object));
    it.protos.map = map;
    let set = proto_object(it, Some(object));
    it.protos.set = set;

    install_object(it, object);
    install_function(it, function);
    install_array(it, array);
    install_string(it, string);
    install_number(it, number);
    install_boolean(it, boolean);
    install_errors(it, object);
    install_promise(it, promise);
    install_collections(it, map, set);
    install_math(it);
    install_json(it);
    install_console(it);
    install_globals(it);
}

// ---- Object ---------------------------------------------------------------

fn install_object(it: &mut Interp, proto: ObjId) {
    let ctor = constructor(it, "Object", object_call, Some(object_call), proto);
    method(it, ctor, "keys", object_keys);
    method(it, ctor, "getOwnPropertyNames", object_keys);
    method(it, ctor, "values", object_values);
    method(it, ctor, "entries", object_entries);
    method(it, ctor, "assign", object_assign);
    method(it, ctor, "freeze", object_freeze);
    method(it, ctor, "isFrozen", object_is_frozen);
    method(it, ctor, "seal", object_freeze);
    method(it, ctor, "preventExtensions", object_prevent_extensions);
    method(it, ctor, "isExtensible", object_is_extensible);
    method(it, ctor, "fromEntries", object_from_entries);
    method(it, ctor, "create", object_create);
    method(it, ctor, "getPrototypeOf", object_get_prototype_of);
    method(it, ctor, "defineProperty", object_define_property);
    method(it, proto, "hasOwnProperty", object_has_own_property);
    method(it, ctor, "hasOwn", object_has_own);
    method(it, proto, "toString", object_to_string);
    method(it, proto, "toLocaleString", object_to_string);
    method(it, proto, "valueOf", object_value_of);
}

fn object_call(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    match arg(args, 0) {
        v @ Value::Obj(_) => Ok(v),
        _ => Ok(Value::Obj(it.new_object()?)),
    }
}

fn require_object(it: &mut Interp, v: &Value) -> R<()> {
    if v.is_nullish() {
        return it.type_error("Cannot convert undefined or null to object");
    }
    Ok(())
}

fn object_keys(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let o = arg(args, 0);
    require_object(it, &o)?;
    let keys = it.own_keys(&o)?;
    it.charge(keys.len() as u64)?;
    it.new_array(keys.into_iter().map(Value::Str).collect())
}

fn object_values(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let o = arg(args, 0);
    require_object(it, &o)?;
    let keys = it.own_keys(&o)?;
    it.charge(keys.len() as u64)?;
    let mut out = Vec::with_capacity(keys.len());
    for k in keys {
        out.push(it.get(&o, &Key::from_rc(k))?);
    }
    it.new_array(out)
}

fn object_entries(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let o = arg(args, 0);
    require_object(it, &o)?;
    let keys = it.own_keys(&o)?;
    it.charge(keys.len() as u64)?;
    let mut out = Vec::with_capacity(keys.len());
    for k in keys {
        let v = it.get(&o, &Key::from_rc(k.clone()))?;
        out.push(it.new_array(vec![Value::Str(k), v])?);
    }
    it.new_array(out)
}

fn object_assign(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let target = arg(args, 0);
    require_object(it, &target)?;
    for src in args.iter().skip(1) {
        if src.is_nullish() {
            continue;
        }
        let keys = it.own_keys(src)?;
        it.charge(keys.len() as u64)?;
        for k in keys {
            let v = it.get(src, &Key::from_rc(k.clone()))?;
            it.put(&target, Key::from_rc(k), v)?;
        }
    }
    Ok(target)
}

fn object_freeze(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let o = arg(args, 0);
    if let Value::Obj(id) = &o {
        if matches!(it.obj(*id).kind, ObjKind::HostNs(_)) {
            return it.type_error("Cannot freeze a host object");
        }
        let obj = it.obj_mut(*id);
        obj.frozen = true;
        obj.extensible = false;
    }
    Ok(o)
}

fn object_prevent_extensions(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let o = arg(args, 0);
    if let Value::Obj(id) = &o {
        it.obj_mut(*id).extensible = false;
    }
    Ok(o)
}

fn object_is_frozen(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Bool(match arg(args, 0) {
        Value::Obj(id) => it.obj(id).frozen,
        _ => true,
    }))
}

fn object_is_extensible(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Bool(match arg(args, 0) {
        Value::Obj(id) => it.obj(id).extensible,
        _ => false,
    }))
}

fn object_from_entries(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let entries = it.iterate(&arg(args, 0))?;
    let out = it.new_object()?;
    for e in entries {
        let k = it.get(&e, &Key::Index(0))?;
        let v = it.get(&e, &Key::Index(1))?;
        let k = it.to_key(&k)?;
        it.put_obj(out, k, v)?;
    }
    Ok(Value::Obj(out))
}

fn object_create(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let proto = match arg(args, 0) {
        Value::Null => None,
        Value::Obj(id) => Some(id),
        _ => return it.type_error("Object prototype may only be an Object or null"),
    };
    Ok(Value::Obj(it.alloc(Object::new(proto, ObjKind::Ordinary))?))
}

fn object_get_prototype_of(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let o = arg(args, 0);
    require_object(it, &o)?;
    Ok(match o {
        Value::Obj(id) => it.obj(id).proto.map(Value::Obj).unwrap_or(Value::Null),
        Value::Str(_) => Value::Obj(it.protos.string),
        Value::Num(_) => Value::Obj(it.protos.number),
        Value::Bool(_) => Value::Obj(it.protos.boolean),
        _ => Value::Null,
    })
}

fn object_define_property(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let o = arg(args, 0);
    let Value::Obj(_) = o else {
        return it.type_error("Object.defineProperty called on non-object");
    };
    let desc = arg(args, 2);
    let getter = it.get_named(&desc, "get")?;
    let setter = it.get_named(&desc, "set")?;
    if !getter.is_nullish() || !setter.is_nullish() {
        return it.type_error("accessor properties are not supported");
    }
    let v = it.get_named(&desc, "value")?;
    let k = it.to_key(&arg(args, 1))?;
    it.put(&o, k, v)?;
    Ok(o)
}

fn has_own(it: &mut Interp, o: &Value, k: &Value) -> R<bool> {
    let key = it.to_key(k)?;
    match o {
        Value::Obj(id) => {
            let id = *id;
            match &it.obj(id).kind {
                ObjKind::Array { items, .. } => match &key {
                    Key::Index(i) => return Ok((*i as usize) < items.len()),
                    Key::Name(n) if &**n == "length" => return Ok(true),
                    _ => {}
                },
                ObjKind::HostNs(_) => {
                    let keys = it.own_keys(o)?;
                    return Ok(keys.iter().any(|x| **x == *key.name()));
                }
                _ => {}
            }
            Ok(it.obj(id).props.contains_key(&*key.name()))
        }
        Value::Str(s) => Ok(match key {
            Key::Index(i) => (i as usize) < s.chars().count(),
            Key::Name(n) => &*n == "length",
        }),
        _ => Ok(false),
    }
}

fn object_has_own_property(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Bool(has_own(it, this, &arg(args, 0))?))
}

fn object_has_own(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Bool(has_own(it, &arg(args, 0), &arg(args, 1))?))
}

fn object_to_string(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let tag = match this {
        Value::Undefined => "Undefined",
        Value::Null => "Null",
        Value::Obj(id) => match it.obj(*id).kind {
            ObjKind::Array { .. } => "Array",
            ObjKind::Function(_) => "Function",
            ObjKind::Error { .. } => "Error",
            ObjKind::Promise(_) => "Promise",
            ObjKind::Map(_) => "Map",
            ObjKind::Set(_) => "Set",
            _ => "Object",
        },
        Value::Str(_) => "String",
        Value::Num(_) => "Number",
        Value::Bool(_) => "Boolean",
    };
    Ok(Value::str(&format!("[object {tag}]")))
}

fn object_value_of(_it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    Ok(this.clone())
}

// ---- Function -------------------------------------------------------------

fn install_function(it: &mut Interp, proto: ObjId) {
    method(it, proto, "call", function_call);
    method(it, proto, "apply", function_apply);
    method(it, proto, "bind", function_bind);
    method(it, proto, "toString", function_to_string);
}

fn function_call(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let rest = args.get(1..).map(|s| s.to_vec()).unwrap_or_default();
    it.call(this, arg(args, 0), rest)
}

fn function_apply(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let list = arg(args, 1);
    let items = if list.is_nullish() {
        Vec::new()
    } else {
        it.iterate(&list)?
    };
    it.call(this, arg(args, 0), items)
}

fn function_bind(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let Value::Obj(target) = this else {
        return it.type_error("Bind must be called on a function");
    };
    if !it.obj(*target).is_callable() {
        return it.type_error("Bind must be called on a function");
    }
    let id = it.new_function(Func::Bound {
        target: *target,
        this: arg(args, 0),
        args: args.get(1..).map(|s| s.to_vec()).unwrap_or_default(),
    })?;
    Ok(Value::Obj(id))
}

fn function_to_string(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let name = it.get_named(this, "name")?;
    let name = it.to_string(&name)?;
    Ok(Value::str(&format!("function {name}() {{ [native code] }}")))
}

// ---- Array ----------------------------------------------------------------

fn install_array(it: &mut Interp, proto: ObjId) {
    let ctor = constructor(it, "Array", array_ctor, Some(array_ctor), proto);
    method(it, ctor, "isArray", array_is_array);
    method(it, ctor, "from", array_from);
    method(it, ctor, "of", array_of);
    let methods: &[(&'static str, NativeFn)] = &[
        ("push", array_push),
        ("pop", array_pop),
        ("shift", array_shift),
        ("unshift", array_unshift),
        ("slice", array_slice),
        ("splice", array_splice),
        ("concat", array_concat),
        ("join", array_join),
        ("toString", array_to_string),
        ("reverse", array_reverse),
        ("toReversed", array_to_reversed),
        ("indexOf", array_index_of),
        ("lastIndexOf", array_last_index_of),
        ("includes", array_includes),
        ("find", array_find),
        ("findIndex", array_find_index),
        ("findLast", array_find_last),
        ("findLastIndex", array_find_last_index),
        ("filter", array_filter),
        ("map", array_map),
        ("forEach", array_for_each),
        ("reduce", array_reduce),
        ("reduceRight", array_reduce_right),
        ("some", array_some),
        ("every", array_every),
        ("sort", array_sort),
        ("toSorted", array_to_sorted),
        ("flat", array_flat),
        ("flatMap", array_flat_map),
        ("fill", array_fill),
        ("keys", array_keys),
        ("values", array_values),
        ("entries", array_entries),
        ("at", array_at),
    ];
    for (name, f) in methods {
        method(it, proto, name, *f);
    }
}

fn this_array(it: &mut Interp, this: &Value, name: &str) -> R<(ObjId, Vec<Value>)> {
    if let Value::Obj(id) = this {
        if let ObjKind::Array { items, .. } = &it.obj(*id).kind {
            return Ok((*id, items.clone()));
        }
    }
    it.type_error(format!("Array.prototype.{name} called on a non-array"))
}

fn with_items<T>(it: &mut Interp, id: ObjId, f: impl FnOnce(&mut Vec<Value>) -> T) -> R<T> {
    if it.obj(id).frozen {
        return it.type_error("Cannot modify a frozen array");
    }
    let out = match &mut it.obj_mut(id).kind {
        ObjKind::Array { items, .. } => f(items),
        _ => unreachable!("checked by this_array"),
    };
    let len = match &it.obj(id).kind {
        ObjKind::Array { items, .. } => items.len(),
        _ => 0,
    };
    if len > it.limits.max_array_len {
        return it.range_error("Invalid array length");
    }
    it.array_changed(id)?;
    Ok(out)
}

fn array_ctor(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    if let [Value::Num(n)] = args {
        if *n < 0.0 || n.fract() != 0.0 || *n as usize > it.limits.max_array_len {
            return it.range_error("Invalid array length");
        }
        it.charge(*n as u64)?;
        return it.new_array(vec![Value::Undefined; *n as usize]);
    }
    it.new_array(args.to_vec())
}

fn array_is_array(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Bool(it.array_items(&arg(args, 0)).is_some()))
}

fn array_from(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let src = arg(args, 0);
    let items = match &src {
        Value::Obj(id) if matches!(it.obj(*id).kind, ObjKind::Ordinary) => {
            let len = it.get_named(&src, "length")?;
            let len = it.to_number(&len)?;
            let len = if len.is_nan() || len < 0.0 { 0 } else { len as usize };
            if len > it.limits.max_array_len {
                return it.range_error("Invalid array length");
            }
            it.charge(len as u64)?;
            let mut out = Vec::with_capacity(len);
            for i in 0..len {
                out.push(it.get(&src, &Key::Index(i as u32))?);
            }
            out
        }
        v if v.is_nullish() => return it.type_error("Array.from requires an array-like object"),
        v => it.iterate(v)?,
    };
    let f = arg(args, 1);
    if it.is_callable(&f) {
        let mut out = Vec::with_capacity(items.len());
        for (i, x) in items.into_iter().enumerate() {
            out.push(it.call(&f, Value::Undefined, vec![x, Value::Num(i as f64)])?);
        }
        return it.new_array(out);
    }
    it.new_array(items)
}

fn array_of(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    it.new_array(args.to_vec())
}

fn array_push(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (id, _) = this_array(it, this, "push")?;
    it.charge(args.len() as u64)?;
    let len = with_items(it, id, |items| {
        items.extend_from_slice(args);
        items.len()
    })?;
    Ok(Value::Num(len as f64))
}

fn array_pop(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let (id, _) = this_array(it, this, "pop")?;
    Ok(with_items(it, id, |items| items.pop())?.unwrap_or(Value::Undefined))
}

fn array_shift(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let (id, items) = this_array(it, this, "shift")?;
    if items.is_empty() {
        return Ok(Value::Undefined);
    }
    it.charge(items.len() as u64)?;
    with_items(it, id, |items| items.remove(0))
}

fn array_unshift(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (id, items) = this_array(it, this, "unshift")?;
    it.charge((items.len() + args.len()) as u64)?;
    let len = with_items(it, id, |items| {
        items.splice(0..0, args.iter().cloned());
        items.len()
    })?;
    Ok(Value::Num(len as f64))
}

fn array_slice(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (_, items) = this_array(it, this, "slice")?;
    let len = items.len();
    let start = it.rel_index(args.first(), len, 0)?;
    let end = it.rel_index(args.get(1), len, len)?;
    let out = if start < end { items[start..end].to_vec() } else { Vec::new() };
    it.charge(out.len() as u64)?;
    it.new_array(out)
}

fn array_splice(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (id, items) = this_array(it, this, "splice")?;
    let len = items.len();
    let start = it.rel_index(args.first(), len, 0)?;
    let count = if args.len() < 2 {
        len - start
    } else {
        let n = it.to_number(&args[1])?;
        let n = if n.is_nan() { 0.0 } else { n.trunc() };
        (n.max(0.0) as usize).min(len - start)
    };
    let inserts: Vec<Value> = args.iter().skip(2).cloned().collect();
    it.charge((len + inserts.len()) as u64)?;
    let removed = with_items(it, id, |items| items.splice(start..start + count, inserts).collect::<Vec<_>>())?;
    it.new_array(removed)
}

fn array_concat(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (_, mut items) = this_array(it, this, "concat")?;
    for a in args {
        match it.array_items(a) {
            Some(xs) => items.extend(xs.iter().cloned()),
            None => items.push(a.clone()),
        }
    }
    it.charge(items.len() as u64)?;
    it.new_array(items)
}

fn join_items(it: &mut Interp, items: &[Value], sep: &str) -> R<String> {
    let mut out = String::new();
    it.charge(items.len() as u64)?;
    for (i, x) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        if !x.is_nullish() {
            let s = it.to_string(x)?;
            out.push_str(&s);
        }
        it.check_string_len(out.len())?;
    }
    Ok(out)
}

fn array_join(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (_, items) = this_array(it, this, "join")?;
    let sep = match arg(args, 0) {
        Value::Undefined => Rc::from(","),
        v => it.to_string(&v)?,
    };
    Ok(Value::str(&join_items(it, &items, &sep)?))
}

fn array_to_string(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    if it.array_items(this).is_none() {
        return object_to_string(it, this, &[]);
    }
    let (_, items) = this_array(it, this, "toString")?;
    Ok(Value::str(&join_items(it, &items, ",")?))
}

fn array_reverse(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let (id, items) = this_array(it, this, "reverse")?;
    it.charge(items.len() as u64)?;
    with_items(it, id, |items| items.reverse())?;
    Ok(this.clone())
}

fn array_to_reversed(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let (_, mut items) = this_array(it, this, "toReversed")?;
    items.reverse();
    it.new_array(items)
}

fn array_index_of(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (_, items) = this_array(it, this, "indexOf")?;
    let needle = arg(args, 0);
    let from = it.rel_index(args.get(1), items.len(), 0)?;
    it.charge(items.len() as u64)?;
    Ok(Value::Num(
        items
            .iter()
            .enumerate()
            .skip(from)
            .find(|(_, x)| x.strict_eq(&needle))
            .map(|(i, _)| i as f64)
            .unwrap_or(-1.0),
    ))
}

fn array_last_index_of(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (_, items) = this_array(it, this, "lastIndexOf")?;
    let needle = arg(args, 0);
    it.charge(items.len() as u64)?;
    Ok(Value::Num(
        items
            .iter()
            .rposition(|x| x.strict_eq(&needle))
            .map(|i| i as f64)
            .unwrap_or(-1.0),
    ))
}

fn array_includes(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (_, items) = this_array(it, this, "includes")?;
    let needle = arg(args, 0);
    let from = it.rel_index(args.get(1), items.len(), 0)?;
    it.charge(items.len() as u64)?;
    Ok(Value::Bool(items.iter().skip(from).any(|x| x.same_value_zero(&needle))))
}

fn callback(it: &mut Interp, args: &[Value], name: &str) -> R<Value> {
    let f = arg(args, 0);
    if !it.is_callable(&f) {
        let s = inspect(it, &f, false)?;
        return it.type_error(format!("{s} is not a function (in Array.prototype.{name})"));
    }
    Ok(f)
}

fn call_each(it: &mut Interp, f: &Value, this_arg: &Value, x: &Value, i: usize, arr: &Value) -> R<Value> {
    it.call(f, this_arg.clone(), vec![x.clone(), Value::Num(i as f64), arr.clone()])
}

fn find_impl(it: &mut Interp, this: &Value, args: &[Value], name: &str, rev: bool) -> R<Option<(usize, Value)>> {
    let (_, items) = this_array(it, this, name)?;
    let f = callback(it, args, name)?;
    let t = arg(args, 1);
    let order: Box<dyn Iterator<Item = usize>> = if rev {
        Box::new((0..items.len()).rev())
    } else {
        Box::new(0..items.len())
    };
    for i in order {
        let r = call_each(it, &f, &t, &items[i], i, this)?;
        if it.truthy(&r) {
            return Ok(Some((i, items[i].clone())));
        }
    }
    Ok(None)
}

fn array_find(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    Ok(find_impl(it, this, args, "find", false)?.map(|x| x.1).unwrap_or(Value::Undefined))
}

fn array_find_index(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Num(find_impl(it, this, args, "findIndex", false)?.map(|x| x.0 as f64).unwrap_or(-1.0)))
}

fn array_find_last(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    Ok(find_impl(it, this, args, "findLast", true)?.map(|x| x.1).unwrap_or(Value::Undefined))
}

fn array_find_last_index(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Num(find_impl(it, this, args, "findLastIndex", true)?.map(|x| x.0 as f64).unwrap_or(-1.0)))
}

fn array_filter(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (_, items) = this_array(it, this, "filter")?;
    let f = callback(it, args, "filter")?;
    let t = arg(args, 1);
    let mut out = Vec::new();
    for (i, x) in items.iter().enumerate() {
        let r = call_each(it, &f, &t, x, i, this)?;
        if it.truthy(&r) {
            out.push(x.clone());
        }
    }
    it.new_array(out)
}

fn array_map(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (_, items) = this_array(it, this, "map")?;
    let f = callback(it, args, "map")?;
    let t = arg(args, 1);
    let mut out = Vec::with_capacity(items.len());
    for (i, x) in items.iter().enumerate() {
        out.push(call_each(it, &f, &t, x, i, this)?);
    }
    it.new_array(out)
}

fn array_for_each(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (_, items) = this_array(it, this, "forEach")?;
    let f = callback(it, args, "forEach")?;
    let t = arg(args, 1);
    for (i, x) in items.iter().enumerate() {
        call_each(it, &f, &t, x, i, this)?;
    }
    Ok(Value::Undefined)
}

fn reduce_impl(it: &mut Interp, this: &Value, args: &[Value], rev: bool) -> R<Value> {
    let name = if rev { "reduceRight" } else { "reduce" };
    let (_, items) = this_array(it, this, name)?;
    let f = callback(it, args, name)?;
    let mut idx: Vec<usize> = (0..items.len()).collect();
    if rev {
        idx.reverse();
    }
    let mut iter = idx.into_iter();
    let mut acc = if args.len() >= 2 {
        args[1].clone()
    } else {
        match iter.next() {
            Some(i) => items[i].clone(),
            None => return it.type_error("Reduce of empty array with no initial value"),
        }
    };
    for i in iter {
        acc = it.call(
            &f,
            Value::Undefined,
            vec![acc, items[i].clone(), Value::Num(i as f64), this.clone()],
        )?;
    }
    Ok(acc)
}

fn array_reduce(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    reduce_impl(it, this, args, false)
}

fn array_reduce_right(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    reduce_impl(it, this, args, true)
}

fn array_some(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Bool(find_impl(it, this, args, "some", false)?.is_some()))
}

fn array_every(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (_, items) = this_array(it, this, "every")?;
    let f = callback(it, args, "every")?;
    let t = arg(args, 1);
    for (i, x) in items.iter().enumerate() {
        let r = call_each(it, &f, &t, x, i, this)?;
        if !it.truthy(&r) {
            return Ok(Value::Bool(false));
        }
    }
    Ok(Value::Bool(true))
}

fn sort_values(it: &mut Interp, items: Vec<Value>, cmp: &Value) -> R<Vec<Value>> {
    let n = items.len();
    it.charge((n as u64) * (64 - (n as u64).leading_zeros() as u64 + 1))?;
    let use_cmp = it.is_callable(cmp);
    if !use_cmp && !cmp.is_nullish() {
        return it.type_error("The comparison function must be either a function or undefined");
    }
    let mut compare = |it: &mut Interp, a: &Value, b: &Value| -> R<Ordering> {
        match (a, b) {
            (Value::Undefined, Value::Undefined) => return Ok(Ordering::Equal),
            (Value::Undefined, _) => return Ok(Ordering::Greater),
            (_, Value::Undefined) => return Ok(Ordering::Less),
            _ => {}
        }
        if use_cmp {
            let r = it.call(cmp, Value::Undefined, vec![a.clone(), b.clone()])?;
            let x = it.to_number(&r)?;
            Ok(if x < 0.0 {
                Ordering::Less
            } else if x > 0.0 {
                Ordering::Greater
            } else {
                Ordering::Equal
            })
        } else {
            let sa = it.to_string(a)?;
            let sb = it.to_string(b)?;
            let ua: Vec<u16> = sa.encode_utf16().collect();
            let ub: Vec<u16> = sb.encode_utf16().collect();
            Ok(ua.cmp(&ub))
        }
    };
    merge_sort(it, items, &mut compare)
}

fn merge_sort(
    it: &mut Interp,
    items: Vec<Value>,
    cmp: &mut dyn FnMut(&mut Interp, &Value, &Value) -> R<Ordering>,
) -> R<Vec<Value>> {
    if items.len() <= 1 {
        return Ok(items);
    }
    let mut right = items;
    let left = right.drain(..right.len() / 2).collect::<Vec<_>>();
    let left = merge_sort(it, left, cmp)?;
    let right = merge_sort(it, right, cmp)?;
    let mut out = Vec::with_capacity(left.len() + right.len());
    let (mut i, mut j) = (0, 0);
    while i < left.len() && j < right.len() {
        if cmp(it, &right[j], &left[i])? == Ordering::Less {
            out.push(right[j].clone());
            j += 1;
        } else {
            out.push(left[i].clone());
            i += 1;
        }
    }
    out.extend_from_slice(&left[i..]);
    out.extend_from_slice(&right[j..]);
    Ok(out)
}

fn array_sort(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (id, items) = this_array(it, this, "sort")?;
    let sorted = sort_values(it, items, &arg(args, 0))?;
    with_items(it, id, |items| *items = sorted)?;
    Ok(this.clone())
}

fn array_to_sorted(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (_, items) = this_array(it, this, "toSorted")?;
    let sorted = sort_values(it, items, &arg(args, 0))?;
    it.new_array(sorted)
}

fn flatten(it: &mut Interp, items: &[Value], depth: f64, out: &mut Vec<Value>) -> R<()> {
    for x in items {
        it.tick()?;
        match it.array_items(x) {
            Some(inner) if depth >= 1.0 => {
                let inner = inner.clone();
                flatten(it, &inner, depth - 1.0, out)?;
            }
            _ => out.push(x.clone()),
        }
    }
    Ok(())
}

fn array_flat(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (_, items) = this_array(it, this, "flat")?;
    let depth = match arg(args, 0) {
        Value::Undefined => 1.0,
        v => it.to_number(&v)?,
    };
    let mut out = Vec::new();
    flatten(it, &items, depth.min(64.0), &mut out)?;
    it.new_array(out)
}

fn array_flat_map(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let mapped = array_map(it, this, args)?;
    let items = it.array_items(&mapped).cloned().unwrap_or_default();
    let mut out = Vec::new();
    flatten(it, &items, 1.0, &mut out)?;
    it.new_array(out)
}

fn array_fill(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (id, items) = this_array(it, this, "fill")?;
    let len = items.len();
    let start = it.rel_index(args.get(1), len, 0)?;
    let end = it.rel_index(args.get(2), len, len)?;
    let v = arg(args, 0);
    it.charge(len as u64)?;
    with_items(it, id, |items| {
        for slot in items.iter_mut().take(end).skip(start) {
            *slot = v.clone();
        }
    })?;
    Ok(this.clone())
}

fn array_keys(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let (_, items) = this_array(it, this, "keys")?;
    it.new_array((0..items.len()).map(|i| Value::Num(i as f64)).collect())
}

fn array_values(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let (_, items) = this_array(it, this, "values")?;
    it.new_array(items)
}

fn array_entries(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let (_, items) = this_array(it, this, "entries")?;
    let mut out = Vec::with_capacity(items.len());
    for (i, x) in items.into_iter().enumerate() {
        out.push(it.new_array(vec![Value::Num(i as f64), x])?);
    }
    it.new_array(out)
}

fn relative_at(it: &mut Interp, v: &Value, len: usize) -> R<Option<usize>> {
    let n = it.to_number(v)?;
    let n = if n.is_nan() { 0.0 } else { n.trunc() };
    let i = if n < 0.0 { len as f64 + n } else { n };
    Ok(if i >= 0.0 && i < len as f64 { Some(i as usize) } else { None })
}

fn array_at(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let (_, items) = this_array(it, this, "at")?;
    Ok(match relative_at(it, &arg(args, 0), items.len())? {
        Some(i) => items[i].clone(),
        None => Value::Undefined,
    })
}

// ---- String ---------------------------------------------------------------

fn install_string(it: &mut Interp, proto: ObjId) {
    let ctor = constructor(it, "String", string_ctor, Some(string_ctor), proto);
    method(it, ctor, "fromCharCode", string_from_char_code);
    method(it, ctor, "fromCodePoint", string_from_char_code);
    let methods: &[(&'static str, NativeFn)] = &[
        ("charAt", string_char_at),
        ("charCodeAt", string_char_code_at),
        ("codePointAt", string_char_code_at),
        ("indexOf", string_index_of),
        ("lastIndexOf", string_last_index_of),
        ("includes", string_includes),
        ("startsWith", string_starts_with),
        ("endsWith", string_ends_with),
        ("slice", string_slice),
        ("substring", string_substring),
        ("substr", string_substr),
        ("toUpperCase", string_upper),
        ("toLowerCase", string_lower),
        ("toLocaleUpperCase", string_upper),
        ("toLocaleLowerCase", string_lower),
        ("trim", string_trim),
        ("trimStart", string_trim_start),
        ("trimEnd", string_trim_end),
        ("padStart", string_pad_start),
        ("padEnd", string_pad_end),
        ("repeat", string_repeat),
        ("split", string_split),
        ("replace", string_replace),
        ("replaceAll", string_replace_all),
        ("concat", string_concat),
        ("at", string_at),
        ("localeCompare", string_locale_compare),
        ("normalize", string_value_of),
        ("toString", string_value_of),
        ("valueOf", string_value_of),
        ("match", string_regex_unsupported),
        ("matchAll", string_regex_unsupported),
        ("search", string_regex_unsupported),
    ];
    for (name, f) in methods {
        method(it, proto, name, *f);
    }
}

fn this_str(it: &mut Interp, this: &Value) -> R<Rc<str>> {
    if this.is_nullish() {
        return it.type_error("String.prototype method called on null or undefined");
    }
    it.to_string(this)
}

fn str_arg(it: &mut Interp, args: &[Value], i: usize) -> R<Rc<str>> {
    it.to_string(&arg(args, i))
}

fn chars_of(s: &str) -> Vec<char> {
    s.chars().collect()
}

fn find_chars(hay: &[char], needle: &[char], from: usize) -> Option<usize> {
    if needle.is_empty() {
        return Some(from.min(hay.len()));
    }
    if needle.len() > hay.len() {
        return None;
    }
    (from..=hay.len() - needle.len()).find(|&i| hay[i..i + needle.len()] == *needle)
}

fn string_ctor(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    if args.is_empty() {
        return Ok(Value::str(""));
    }
    Ok(Value::Str(it.to_string(&args[0])?))
}

fn string_from_char_code(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let mut units = Vec::with_capacity(args.len());
    for a in args {
        let n = it.to_number(a)?;
        let n = to_uint32(n);
        if n > 0xFFFF {
            let c = char::from_u32(n).unwrap_or('\u{FFFD}');
            let mut buf = [0u16; 2];
            units.extend_from_slice(c.encode_utf16(&mut buf));
        } else {
            units.push(n as u16);
        }
    }
    Ok(Value::str(&String::from_utf16_lossy(&units)))
}

fn string_char_at(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let s = this_str(it, this)?;
    let i = it.to_number(&arg(args, 0))?;
    let i = if i.is_nan() { 0.0 } else { i.trunc() };
    Ok(Value::str(&if i < 0.0 {
        String::new()
    } else {
        s.chars().nth(i as usize).map(String::from).unwrap_or_default()
    }))
}

fn string_char_code_at(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let s = this_str(it, this)?;
    let i = it.to_number(&arg(args, 0))?;
    let i = if i.is_nan() { 0.0 } else { i.trunc() };
    Ok(Value::Num(if i < 0.0 {
        f64::NAN
    } else {
        s.chars().nth(i as usize).map(|c| c as u32 as f64).unwrap_or(f64::NAN)
    }))
}

fn string_index_of(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let s = chars_of(&this_str(it, this)?);
    let needle = chars_of(&str_arg(it, args, 0)?);
    let from = it.rel_index(args.get(1), s.len(), 0)?;
    it.charge(s.len() as u64 / 16)?;
    Ok(Value::Num(find_chars(&s, &needle, from).map(|i| i as f64).unwrap_or(-1.0)))
}

fn string_last_index_of(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let s = chars_of(&this_str(it, this)?);
    let needle = chars_of(&str_arg(it, args, 0)?);
    it.charge(s.len() as u64 / 16)?;
    if needle.len() > s.len() {
        return Ok(Value::Num(-1.0));
    }
    let found = (0..=s.len() - needle.len()).rev().find(|&i| s[i..i + needle.len()] == *needle);
    Ok(Value::Num(found.map(|i| i as f64).unwrap_or(-1.0)))
}

fn string_includes(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let s = this_str(it, this)?;
    let needle = str_arg(it, args, 0)?;
    it.charge(s.len() as u64 / 16)?;
    Ok(Value::Bool(s.contains(&*needle)))
}

fn string_starts_with(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let s = chars_of(&this_str(it, this)?);
    let needle = chars_of(&str_arg(it, args, 0)?);
    let from = it.rel_index(args.get(1), s.len(), 0)?;
    Ok(Value::Bool(s[from..].starts_with(&needle)))
}

fn string_ends_with(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let s = chars_of(&this_str(it, this)?);
    let needle = chars_of(&str_arg(it, args, 0)?);
    let end = it.rel_index(args.get(1), s.len(), s.len())?;
    Ok(Value::Bool(s[..end].ends_with(&needle)))
}

fn string_slice(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let s = chars_of(&this_str(it, this)?);
    let start = it.rel_index(args.first(), s.len(), 0)?;
    let end = it.rel_index(args.get(1), s.len(), s.len())?;
    Ok(Value::str(&if start < end { s[start..end].iter().collect::<String>() } else { String::new() }))
}

fn clamp_index(it: &mut Interp, v: Option<&Value>, len: usize, default: usize) -> R<usize> {
    match v {
        None | Some(Value::Undefined) => Ok(default),
        Some(v) => {
            let n = it.to_number(v)?;
            Ok(if n.is_nan() || n < 0.0 { 0 } else { (n.trunc() as usize).min(len) })
        }
    }
}

fn string_substring(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let s = chars_of(&this_str(it, this)?);
    let a = clamp_index(it, args.first(), s.len(), 0)?;
    let b = clamp_index(it, args.get(1), s.len(), s.len())?;
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    Ok(Value::str(&s[lo..hi].iter().collect::<String>()))
}

fn string_substr(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let s = chars_of(&this_str(it, this)?);
    let start = it.rel_index(args.first(), s.len(), 0)?;
    let len = clamp_index(it, args.get(1), s.len(), s.len())?;
    let end = (start + len).min(s.len());
    Ok(Value::str(&s[start..end].iter().collect::<String>()))
}

fn string_upper(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    Ok(Value::str(&this_str(it, this)?.to_uppercase()))
}

fn string_lower(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    Ok(Value::str(&this_str(it, this)?.to_lowercase()))
}

fn string_trim(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    Ok(Value::str(this_str(it, this)?.trim_matches(is_js_whitespace)))
}

fn string_trim_start(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    Ok(Value::str(this_str(it, this)?.trim_start_matches(is_js_whitespace)))
}

fn string_trim_end(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    Ok(Value::str(this_str(it, this)?.trim_end_matches(is_js_whitespace)))
}

fn pad(it: &mut Interp, this: &Value, args: &[Value], start: bool) -> R<Value> {
    let s = this_str(it, this)?;
    let target = it.to_number(&arg(args, 0))?;
    let fill = match arg(args, 1) {
        Value::Undefined => Rc::from(" "),
        v => it.to_string(&v)?,
    };
    let len = s.chars().count();
    let target = if target.is_nan() { 0 } else { target.max(0.0) as usize };
    if target <= len || fill.is_empty() {
        return Ok(Value::Str(s));
    }
    it.check_string_len(target)?;
    it.charge(target as u64 / 16)?;
    let padding: String = fill.chars().cycle().take(target - len).collect();
    Ok(Value::str(&if start { format!("{padding}{s}") } else { format!("{s}{padding}") }))
}

fn string_pad_start(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    pad(it, this, args, true)
}

fn string_pad_end(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    pad(it, this, args, false)
}

fn string_repeat(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let s = this_str(it, this)?;
    let n = it.to_number(&arg(args, 0))?;
    if n < 0.0 || n.is_infinite() {
        return it.range_error(format!("Invalid count value: {}", format_number(n)));
    }
    let n = if n.is_nan() { 0 } else { n as usize };
    let total = s.len().saturating_mul(n);
    it.check_string_len(total)?;
    it.charge(total as u64 / 16)?;
    Ok(Value::str(&s.repeat(n)))
}

fn string_split(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let s = this_str(it, this)?;
    let limit = match arg(args, 1) {
        Value::Undefined => usize::MAX,
        v => to_uint32(it.to_number(&v)?) as usize,
    };
    let parts: Vec<Value> = match arg(args, 0) {
        Value::Undefined => vec![Value::Str(s.clone())],
        sep => {
            let sep = it.to_string(&sep)?;
            if sep.is_empty() {
                s.chars().map(|c| Value::str(&c.to_string())).collect()
            } else {
                s.split(&*sep).map(Value::str).collect()
            }
        }
    };
    it.charge(parts.len() as u64)?;
    it.new_array(parts.into_iter().take(limit).collect())
}

fn replace_impl(it: &mut Interp, this: &Value, args: &[Value], all: bool) -> R<Value> {
    let s = this_str(it, this)?;
    let pat = str_arg(it, args, 0)?;
    let replacement = arg(args, 1);
    let func = it.is_callable(&replacement);
    let template = if func { Rc::from("") } else { it.to_string(&replacement)? };
    let mut out = String::new();
    let mut last = 0;
    let mut matches: Vec<usize> = Vec::new();
    if pat.is_empty() {
        if all {
            matches.extend(s.char_indices().map(|(i, _)| i));
            matches.push(s.len());
        } else {
            matches.push(0);
        }
    } else if all {
        matches.extend(s.match_indices(&*pat).map(|(i, _)| i));
    } else if let Some(i) = s.find(&*pat) {
        matches.push(i);
    }
    it.charge(matches.len() as u64 + s.len() as u64 / 16)?;
    for pos in matches {
        out.push_str(&s[last..pos]);
        let rep = if func {
            let char_pos = s[..pos].chars().count();
            let r = it.call(
                &replacement,
                Value::Undefined,
                vec![Value::Str(pat.clone()), Value::Num(char_pos as f64), Value::Str(s.clone())],
            )?;
            it.to_string(&r)?.to_string()
        } else {
            expand_template(&template, &pat, &s[..pos], &s[pos + pat.len()..])
        };
        out.push_str(&rep);
        it.check_string_len(out.len())?;
        last = pos + pat.len();
    }
    out.push_str(&s[last..]);
    Ok(Value::str(&out))
}

fn expand_template(t: &str, matched: &str, before: &str, after: &str) -> String {
    if !t.contains('$') {
        return t.to_string();
    }
    let mut out = String::new();
    let mut cs = t.chars().peekable();
    while let Some(c) = cs.next() {
        if c != '$' {
            out.push(c);
            continue;
        }
        match cs.peek() {
            Some('$') => {
                cs.next();
                out.push('$');
            }
            Some('&') => {
                cs.next();
                out.push_str(matched);
            }
            Some('`') => {
                cs.next();
                out.push_str(before);
            }
            Some('\'') => {
                cs.next();
                out.push_str(after);
            }
            _ => out.push('$'),
        }
    }
    out
}

fn string_replace(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    replace_impl(it, this, args, false)
}

fn string_replace_all(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    replace_impl(it, this, args, true)
}

fn string_concat(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let mut s = this_str(it, this)?.to_string();
    for a in args {
        s.push_str(&it.to_string(a)?);
        it.check_string_len(s.len())?;
    }
    Ok(Value::str(&s))
}

fn string_at(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let s = chars_of(&this_str(it, this)?);
    Ok(match relative_at(it, &arg(args, 0), s.len())? {
        Some(i) => Value::str(&s[i].to_string()),
        None => Value::Undefined,
    })
}

fn string_locale_compare(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let a = this_str(it, this)?;
    let b = str_arg(it, args, 0)?;
    let key = |s: &str| (s.to_lowercase(), s.to_string());
    Ok(Value::Num(match key(&a).cmp(&key(&b)) {
        Ordering::Less => -1.0,
        Ordering::Equal => 0.0,
        Ordering::Greater => 1.0,
    }))
}

fn string_value_of(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    Ok(Value::Str(this_str(it, this)?))
}

fn string_regex_unsupported(it: &mut Interp, _this: &Value, _args: &[Value]) -> R<Value> {
    it.type_error("regular expressions are not supported")
}

// ---- Number / Boolean -----------------------------------------------------

fn install_number(it: &mut Interp, proto: ObjId) {
    let ctor = constructor(it, "Number", number_ctor, Some(number_ctor), proto);
    method(it, ctor, "isInteger", number_is_integer);
    method(it, ctor, "isSafeInteger", number_is_safe_integer);
    method(it, ctor, "isFinite", number_is_finite);
    method(it, ctor, "isNaN", number_is_nan);
    method(it, ctor, "parseFloat", global_parse_float);
    method(it, ctor, "parseInt", global_parse_int);
    for (name, v) in [
        ("MAX_SAFE_INTEGER", 9007199254740991.0),
        ("MIN_SAFE_INTEGER", -9007199254740991.0),
        ("EPSILON", f64::EPSILON),
        ("MAX_VALUE", f64::MAX),
        ("MIN_VALUE", 5e-324),
        ("POSITIVE_INFINITY", f64::INFINITY),
        ("NEGATIVE_INFINITY", f64::NEG_INFINITY),
        ("NaN", f64::NAN),
    ] {
        constant(it, ctor, name, Value::Num(v));
    }
    method(it, proto, "toFixed", number_to_fixed);
    method(it, proto, "toPrecision", number_to_precision);
    method(it, proto, "toExponential", number_to_exponential);
    method(it, proto, "toString", number_to_string);
    method(it, proto, "toLocaleString", number_to_locale_string);
    method(it, proto, "valueOf", number_value_of);
}

fn this_num(it: &mut Interp, this: &Value) -> R<f64> {
    match this {
        Value::Num(n) => Ok(*n),
        _ => it.type_error("Number.prototype method called on incompatible receiver"),
    }
}

fn number_ctor(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    if args.is_empty() {
        return Ok(Value::Num(0.0));
    }
    Ok(Value::Num(it.to_number(&args[0])?))
}

fn number_is_integer(_it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Bool(matches!(arg(args, 0), Value::Num(n) if n.is_finite() && n.fract() == 0.0)))
}

fn number_is_safe_integer(_it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Bool(
        matches!(arg(args, 0), Value::Num(n) if n.is_finite() && n.fract() == 0.0 && n.abs() <= 9007199254740991.0),
    ))
}

fn number_is_finite(_it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Bool(matches!(arg(args, 0), Value::Num(n) if n.is_finite())))
}

fn number_is_nan(_it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Bool(matches!(arg(args, 0), Value::Num(n) if n.is_nan())))
}

fn digits_arg(it: &mut Interp, v: &Value, lo: f64, hi: f64, default: Option<usize>) -> R<Option<usize>> {
    if matches!(v, Value::Undefined) {
        return Ok(default);
    }
    let d = it.to_number(v)?;
    let d = if d.is_nan() { 0.0 } else { d.trunc() };
    if d < lo || d > hi {
        return it.range_error("toFixed() digits argument must be between 0 and 100");
    }
    Ok(Some(d as usize))
}

fn number_to_fixed(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let x = this_num(it, this)?;
    let d = digits_arg(it, &arg(args, 0), 0.0, 100.0, Some(0))?.unwrap_or(0);
    Ok(Value::str(&to_fixed(x, d)))
}

fn number_to_precision(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let x = this_num(it, this)?;
    match digits_arg(it, &arg(args, 0), 1.0, 100.0, None)? {
        None => Ok(Value::str(&format_number(x))),
        Some(p) => Ok(Value::str(&to_precision(x, p))),
    }
}

fn number_to_exponential(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let x = this_num(it, this)?;
    let d = digits_arg(it, &arg(args, 0), 0.0, 100.0, None)?;
    Ok(Value::str(&to_exponential(x, d)))
}

fn number_to_string(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let x = this_num(it, this)?;
    let radix = match arg(args, 0) {
        Value::Undefined => 10,
        v => {
            let r = it.to_number(&v)?;
            if !(2.0..=36.0).contains(&r) {
                return it.range_error("toString() radix must be between 2 and 36");
            }
            r as u32
        }
    };
    Ok(Value::str(&format_radix(x, radix)))
}

fn number_to_locale_string(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let x = this_num(it, this)?;
    if !x.is_finite() {
        return Ok(Value::str(&format_number(x)));
    }
    let fixed = to_fixed(x, 3);
    let (int, frac) = fixed.split_once('.').unwrap_or((&fixed, ""));
    let (sign, int) = int.strip_prefix('-').map(|i| ("-", i)).unwrap_or(("", int));
    let mut grouped = String::new();
    for (i, c) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(c);
    }
    let frac = frac.trim_end_matches('0');
    Ok(Value::str(&if frac.is_empty() {
        format!("{sign}{grouped}")
    } else {
        format!("{sign}{grouped}.{frac}")
    }))
}

fn number_value_of(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    Ok(Value::Num(this_num(it, this)?))
}

fn install_boolean(it: &mut Interp, proto: ObjId) {
    constructor(it, "Boolean", boolean_ctor, Some(boolean_ctor), proto);
    method(it, proto, "toString", boolean_to_string);
    method(it, proto, "valueOf", boolean_value_of);
}

fn boolean_ctor(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Bool(it.truthy(&arg(args, 0))))
}

fn boolean_to_string(_it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    Ok(Value::str(if matches!(this, Value::Bool(true)) { "true" } else { "false" }))
}

fn boolean_value_of(_it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    Ok(this.clone())
}

// ---- Errors ---------------------------------------------------------------

fn install_errors(it: &mut Interp, object: ObjId) {
    let base = proto_object(it, Some(object));
    it.protos.error = base;
    constant(it, base, "name", Value::str("Error"));
    constant(it, base, "message", Value::str(""));
    method(it, base, "toString", error_to_string);
    constructor(it, "Error", error_ctor, Some(error_ctor), base);
    let subtypes: [(&'static str, NativeFn); 6] = [
        ("TypeError", type_error_ctor),
        ("ReferenceError", reference_error_ctor),
        ("SyntaxError", syntax_error_ctor),
        ("RangeError", range_error_ctor),
        ("EvalError", eval_error_ctor),
        ("URIError", uri_error_ctor),
    ];
    for (name, f) in subtypes {
        let p = proto_object(it, Some(base));
        constant(it, p, "name", Value::str(name));
        constant(it, p, "message", Value::str(""));
        constructor(it, name, f, Some(f), p);
        match name {
            "TypeError" => it.protos.type_error = p,
            "ReferenceError" => it.protos.reference_error = p,
            "SyntaxError" => it.protos.syntax_error = p,
            "RangeError" => it.protos.range_error = p,
            _ => {}
        }
    }
}

fn build_error(it: &mut Interp, name: &str, args: &[Value]) -> R<Value> {
    let ctor = it.globals.get(name).cloned().unwrap_or(Value::Undefined);
    let proto = it.get_named(&ctor, "prototype")?.as_obj().unwrap_or(it.protos.error);
    let msg = match arg(args, 0) {
        Value::Undefined => None,
        v => Some(it.to_string(&v)?),
    };
    let e = it.make_error(proto, msg.as_deref().unwrap_or(""))?;
    let id = e.as_obj().expect("error object");
    if msg.is_none() {
        it.obj_mut(id).props.shift_remove("message");
    }
    let opts = arg(args, 1);
    if let Value::Obj(_) = opts {
        let cause = it.get_named(&opts, "cause")?;
        if !matches!(cause, Value::Undefined) {
            it.obj_mut(id).props.insert(Rc::from("cause"), cause);
        }
    }
    let text = format!("{name}: {}", msg.as_deref().unwrap_or(""));
    let pos = it.cur_pos;
    it.obj_mut(id)
        .props
        .insert(Rc::from("stack"), Value::str(&format!("{}\n    at <script>:{pos}", text.trim_end_matches(": "))));
    Ok(e)
}

fn error_ctor(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    build_error(it, "Error", args)
}
fn type_error_ctor(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    build_error(it, "TypeError", args)
}
fn reference_error_ctor(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    build_error(it, "ReferenceError", args)
}
fn syntax_error_ctor(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    build_error(it, "SyntaxError", args)
}
fn range_error_ctor(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    build_error(it, "RangeError", args)
}
fn eval_error_ctor(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    build_error(it, "EvalError", args)
}
fn uri_error_ctor(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    build_error(it, "URIError", args)
}

fn error_to_string(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let name = it.get_named(this, "name")?;
    let name = if matches!(name, Value::Undefined) { Rc::from("Error") } else { it.to_string(&name)? };
    let msg = it.get_named(this, "message")?;
    let msg = if matches!(msg, Value::Undefined) { Rc::from("") } else { it.to_string(&msg)? };
    Ok(Value::str(&if msg.is_empty() {
        name.to_string()
    } else if name.is_empty() {
        msg.to_string()
    } else {
        format!("{name}: {msg}")
    }))
}

// ---- Promise --------------------------------------------------------------

fn install_promise(it: &mut Interp, proto: ObjId) {
    let ctor = constructor(it, "Promise", promise_call, Some(promise_construct), proto);
    method(it, ctor, "resolve", promise_resolve_static);
    method(it, ctor, "reject", promise_reject_static);
    method(it, ctor, "all", promise_all);
    method(it, ctor, "allSettled", promise_all_settled);
    method(it, ctor, "race", promise_race);
    method(it, proto, "then", promise_then);
    method(it, proto, "catch", promise_catch);
    method(it, proto, "finally", promise_finally);
}

fn promise_call(it: &mut Interp, _this: &Value, _args: &[Value]) -> R<Value> {
    it.type_error("Promise constructor cannot be invoked without 'new'")
}

fn resolvers(it: &mut Interp, p: ObjId) -> R<(Value, Value)> {
    let done = Rc::new(Cell::new(false));
    let res = it.new_function(Func::Resolver {
        promise: p,
        reject: false,
        done: done.clone(),
    })?;
    let rej = it.new_function(Func::Resolver {
        promise: p,
        reject: true,
        done,
    })?;
    Ok((Value::Obj(res), Value::Obj(rej)))
}

fn promise_construct(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let exec = arg(args, 0);
    if !it.is_callable(&exec) {
        let s = inspect(it, &exec, false)?;
        return it.type_error(format!("Promise resolver {s} is not a function"));
    }
    let p = it.new_promise()?;
    let (res, rej) = resolvers(it, p)?;
    match it.call(&exec, Value::Undefined, vec![res, rej.clone()]) {
        Ok(_) => {}
        Err(crate::interp::Ctrl::Throw(e)) => {
            it.call(&rej, Value::Undefined, vec![e])?;
        }
        Err(a) => return Err(a),
    }
    Ok(Value::Obj(p))
}

fn to_promise(it: &mut Interp, v: Value) -> R<ObjId> {
    if let Some(p) = it.is_promise(&v) {
        return Ok(p);
    }
    let p = it.new_promise()?;
    it.resolve_promise(p, v)?;
    Ok(p)
}

fn promise_resolve_static(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Obj(to_promise(it, arg(args, 0))?))
}

fn promise_reject_static(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let p = it.new_promise()?;
    it.reject_promise(p, arg(args, 0))?;
    Ok(Value::Obj(p))
}

fn this_promise(it: &mut Interp, this: &Value) -> R<ObjId> {
    match it.is_promise(this) {
        Some(p) => Ok(p),
        None => it.type_error("Promise.prototype method called on incompatible receiver"),
    }
}

fn promise_then(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let p = this_promise(it, this)?;
    let derived = it.new_promise()?;
    it.then(p, arg(args, 0), arg(args, 1), Some(derived));
    Ok(Value::Obj(derived))
}

fn promise_catch(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let p = this_promise(it, this)?;
    let derived = it.new_promise()?;
    it.then(p, Value::Undefined, arg(args, 0), Some(derived));
    Ok(Value::Obj(derived))
}

fn finally_pass(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let f = arg(args, 0);
    let rejected = matches!(arg(args, 1), Value::Bool(true));
    let v = arg(args, 2);
    if it.is_callable(&f) {
        let r = it.call(&f, Value::Undefined, Vec::new())?;
        if let Some(p) = it.is_promise(&r) {
            if let Some(PState::Rejected(e)) = it.promise_state(p) {
                return Err(crate::interp::Ctrl::Throw(e));
            }
        }
    }
    if rejected {
        Err(crate::interp::Ctrl::Throw(v))
    } else {
        Ok(v)
    }
}

fn promise_finally(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let p = this_promise(it, this)?;
    let pass = it.new_native("finally", finally_pass, None)?;
    let on_ok = it.new_function(Func::Bound {
        target: pass,
        this: Value::Undefined,
        args: vec![arg(args, 0), Value::Bool(false)],
    })?;
    let on_err = it.new_function(Func::Bound {
        target: pass,
        this: Value::Undefined,
        args: vec![arg(args, 0), Value::Bool(true)],
    })?;
    let derived = it.new_promise()?;
    it.then(p, Value::Obj(on_ok), Value::Obj(on_err), Some(derived));
    Ok(Value::Obj(derived))
}

fn combine(it: &mut Interp, args: &[Value], settled: bool) -> R<Value> {
    let items = it.iterate(&arg(args, 0))?;
    let result = it.new_promise()?;
    if items.is_empty() {
        let empty = it.new_array(Vec::new())?;
        it.resolve_promise(result, empty)?;
        return Ok(Value::Obj(result));
    }
    let state = Rc::new(RefCell::new(Combine {
        values: vec![Value::Undefined; items.len()],
        remaining: items.len(),
        result,
        settled: false,
    }));
    let (_, reject_all) = resolvers(it, result)?;
    for (i, x) in items.into_iter().enumerate() {
        let p = to_promise(it, x)?;
        let on_ok = it.new_function(Func::Combinator {
            index: i,
            state: state.clone(),
            settled_kind: if settled { Some("fulfilled") } else { None },
        })?;
        let on_err = if settled {
            Value::Obj(it.new_function(Func::Combinator {
                index: i,
                state: state.clone(),
                settled_kind: Some("rejected"),
            })?)
        } else {
            reject_all.clone()
        };
        it.then(p, Value::Obj(on_ok), on_err, None);
    }
    Ok(Value::Obj(result))
}

pub(crate) fn combinator_step(
    it: &mut Interp,
    index: usize,
    state: &Rc<RefCell<Combine>>,
    settled_kind: Option<&'static str>,
    v: Value,
) -> R<()> {
    let stored = match settled_kind {
        None => v,
        Some(kind) => {
            let field = if kind == "fulfilled" { "value" } else { "reason" };
            object_from(it, vec![("status", Value::str(kind)), (field, v)])?
        }
    };
    let finished = {
        let mut s = state.borrow_mut();
        if s.settled {
            return Ok(());
        }
        s.values[index] = stored;
        s.remaining -= 1;
        if s.remaining == 0 {
            s.settled = true;
            Some((s.result, std::mem::take(&mut s.values)))
        } else {
            None
        }
    };
    if let Some((result, values)) = finished {
        let arr = it.new_array(values)?;
        it.resolve_promise(result, arr)?;
    }
    Ok(())
}

fn promise_all(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    combine(it, args, false)
}

fn promise_all_settled(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    combine(it, args, true)
}

fn promise_race(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let items = it.iterate(&arg(args, 0))?;
    let result = it.new_promise()?;
    let (res, rej) = resolvers(it, result)?;
    for x in items {
        let p = to_promise(it, x)?;
        it.then(p, res.clone(), rej.clone(), None);
    }
    Ok(Value::Obj(result))
}

// ---- Map / Set ------------------------------------------------------------

fn install_collections(it: &mut Interp, map: ObjId, set: ObjId) {
    constructor(it, "Map", map_call, Some(map_construct), map);
    for (name, f) in [
        ("get", map_get as NativeFn),
        ("set", map_set),
        ("has", map_has),
        ("delete", map_delete),
        ("clear", map_clear),
        ("forEach", map_for_each),
        ("keys", map_keys),
        ("values", map_values),
        ("entries", map_entries),
    ] {
        method(it, map, name, f);
    }
    constructor(it, "Set", set_call, Some(set_construct), set);
    for (name, f) in [
        ("add", set_add as NativeFn),
        ("has", set_has),
        ("delete", set_delete),
        ("clear", set_clear),
        ("forEach", set_for_each),
        ("values", set_values),
        ("keys", set_values),
        ("entries", set_entries),
    ] {
        method(it, set, name, f);
    }
}

fn map_call(it: &mut Interp, _this: &Value, _args: &[Value]) -> R<Value> {
    it.type_error("Constructor Map requires 'new'")
}

fn set_call(it: &mut Interp, _this: &Value, _args: &[Value]) -> R<Value> {
    it.type_error("Constructor Set requires 'new'")
}

fn map_construct(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let proto = it.protos.map;
    let id = it.alloc(Object::new(Some(proto), ObjKind::Map(Vec::new())))?;
    let init = arg(args, 0);
    if !init.is_nullish() {
        for e in it.iterate(&init)? {
            let k = it.get(&e, &Key::Index(0))?;
            let v = it.get(&e, &Key::Index(1))?;
            map_insert(it, id, k, v)?;
        }
    }
    Ok(Value::Obj(id))
}

fn this_map(it: &mut Interp, this: &Value) -> R<ObjId> {
    match this {
        Value::Obj(id) if matches!(it.obj(*id).kind, ObjKind::Map(_)) => Ok(*id),
        _ => it.type_error("Map method called on incompatible receiver"),
    }
}

fn map_entries_of<'a>(it: &'a Interp<'_>, id: ObjId) -> &'a Vec<(Value, Value)> {
    match &it.obj(id).kind {
        ObjKind::Map(m) => m,
        _ => unreachable!("checked by this_map"),
    }
}

fn map_insert(it: &mut Interp, id: ObjId, k: Value, v: Value) -> R<()> {
    let n = map_entries_of(it, id).len();
    it.charge(n as u64 / 8)?;
    if let ObjKind::Map(m) = &mut it.obj_mut(id).kind {
        match m.iter_mut().find(|(x, _)| x.same_value_zero(&k)) {
            Some(slot) => slot.1 = v,
            None => m.push((k, v)),
        }
    }
    Ok(())
}

fn map_get(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let id = this_map(it, this)?;
    let k = arg(args, 0);
    Ok(map_entries_of(it, id)
        .iter()
        .find(|(x, _)| x.same_value_zero(&k))
        .map(|(_, v)| v.clone())
        .unwrap_or(Value::Undefined))
}

fn map_set(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let id = this_map(it, this)?;
    map_insert(it, id, arg(args, 0), arg(args, 1))?;
    Ok(this.clone())
}

fn map_has(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let id = this_map(it, this)?;
    let k = arg(args, 0);
    Ok(Value::Bool(map_entries_of(it, id).iter().any(|(x, _)| x.same_value_zero(&k))))
}

fn map_delete(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let id = this_map(it, this)?;
    let k = arg(args, 0);
    if let ObjKind::Map(m) = &mut it.obj_mut(id).kind {
        if let Some(i) = m.iter().position(|(x, _)| x.same_value_zero(&k)) {
            m.remove(i);
            return Ok(Value::Bool(true));
        }
    }
    Ok(Value::Bool(false))
}

fn map_clear(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let id = this_map(it, this)?;
    if let ObjKind::Map(m) = &mut it.obj_mut(id).kind {
        m.clear();
    }
    Ok(Value::Undefined)
}

fn map_for_each(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let id = this_map(it, this)?;
    let f = arg(args, 0);
    let entries = map_entries_of(it, id).clone();
    for (k, v) in entries {
        it.call(&f, Value::Undefined, vec![v, k, this.clone()])?;
    }
    Ok(Value::Undefined)
}

fn map_keys(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let id = this_map(it, this)?;
    let keys = map_entries_of(it, id).iter().map(|(k, _)| k.clone()).collect();
    it.new_array(keys)
}

fn map_values(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let id = this_map(it, this)?;
    let vals = map_entries_of(it, id).iter().map(|(_, v)| v.clone()).collect();
    it.new_array(vals)
}

fn map_entries(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let v = this.clone();
    let items = it.iterate(&v)?;
    it.new_array(items)
}

fn set_construct(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let proto = it.protos.set;
    let id = it.alloc(Object::new(Some(proto), ObjKind::Set(Vec::new())))?;
    let init = arg(args, 0);
    if !init.is_nullish() {
        for x in it.iterate(&init)? {
            set_insert(it, id, x)?;
        }
    }
    Ok(Value::Obj(id))
}

fn this_set(it: &mut Interp, this: &Value) -> R<ObjId> {
    match this {
        Value::Obj(id) if matches!(it.obj(*id).kind, ObjKind::Set(_)) => Ok(*id),
        _ => it.type_error("Set method called on incompatible receiver"),
    }
}

fn set_items_of<'a>(it: &'a Interp<'_>, id: ObjId) -> &'a Vec<Value> {
    match &it.obj(id).kind {
        ObjKind::Set(s) => s,
        _ => unreachable!("checked by this_set"),
    }
}

fn set_insert(it: &mut Interp, id: ObjId, x: Value) -> R<()> {
    let n = set_items_of(it, id).len();
    it.charge(n as u64 / 8)?;
    if let ObjKind::Set(s) = &mut it.obj_mut(id).kind {
        if !s.iter().any(|y| y.same_value_zero(&x)) {
            s.push(x);
        }
    }
    Ok(())
}

fn set_add(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let id = this_set(it, this)?;
    set_insert(it, id, arg(args, 0))?;
    Ok(this.clone())
}

fn set_has(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let id = this_set(it, this)?;
    let x = arg(args, 0);
    Ok(Value::Bool(set_items_of(it, id).iter().any(|y| y.same_value_zero(&x))))
}

fn set_delete(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let id = this_set(it, this)?;
    let x = arg(args, 0);
    if let ObjKind::Set(s) = &mut it.obj_mut(id).kind {
        if let Some(i) = s.iter().position(|y| y.same_value_zero(&x)) {
            s.remove(i);
            return Ok(Value::Bool(true));
        }
    }
    Ok(Value::Bool(false))
}

fn set_clear(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let id = this_set(it, this)?;
    if let ObjKind::Set(s) = &mut it.obj_mut(id).kind {
        s.clear();
    }
    Ok(Value::Undefined)
}

fn set_for_each(it: &mut Interp, this: &Value, args: &[Value]) -> R<Value> {
    let id = this_set(it, this)?;
    let f = arg(args, 0);
    let items = set_items_of(it, id).clone();
    for x in items {
        it.call(&f, Value::Undefined, vec![x.clone(), x, this.clone()])?;
    }
    Ok(Value::Undefined)
}

fn set_values(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let id = this_set(it, this)?;
    let items = set_items_of(it, id).clone();
    it.new_array(items)
}

fn set_entries(it: &mut Interp, this: &Value, _args: &[Value]) -> R<Value> {
    let id = this_set(it, this)?;
    let items = set_items_of(it, id).clone();
    let mut out = Vec::with_capacity(items.len());
    for x in items {
        out.push(it.new_array(vec![x.clone(), x])?);
    }
    it.new_array(out)
}

// ---- Math -----------------------------------------------------------------

fn install_math(it: &mut Interp) {
    let m = it.new_object().expect("builtin allocation");
    for (name, v) in [
        ("PI", std::f64::consts::PI),
        ("E", std::f64::consts::E),
        ("LN2", std::f64::consts::LN_2),
        ("LN10", std::f64::consts::LN_10),
        ("LOG2E", std::f64::consts::LOG2_E),
        ("LOG10E", std::f64::consts::LOG10_E),
        ("SQRT2", std::f64::consts::SQRT_2),
        ("SQRT1_2", std::f64::consts::FRAC_1_SQRT_2),
    ] {
        constant(it, m, name, Value::Num(v));
    }
    let unary: &[(&'static str, NativeFn)] = &[
        ("abs", |it, _, a| math1(it, a, f64::abs)),
        ("floor", |it, _, a| math1(it, a, f64::floor)),
        ("ceil", |it, _, a| math1(it, a, f64::ceil)),
        ("round", |it, _, a| math1(it, a, js_round)),
        ("trunc", |it, _, a| math1(it, a, f64::trunc)),
        ("sign", |it, _, a| math1(it, a, js_sign)),
        ("sqrt", |it, _, a| math1(it, a, f64::sqrt)),
        ("cbrt", |it, _, a| math1(it, a, f64::cbrt)),
        ("exp", |it, _, a| math1(it, a, f64::exp)),
        ("expm1", |it, _, a| math1(it, a, f64::exp_m1)),
        ("log", |it, _, a| math1(it, a, f64::ln)),
        ("log2", |it, _, a| math1(it, a, f64::log2)),
        ("log10", |it, _, a| math1(it, a, f64::log10)),
        ("log1p", |it, _, a| math1(it, a, f64::ln_1p)),
        ("sin", |it, _, a| math1(it, a, f64::sin)),
        ("cos", |it, _, a| math1(it, a, f64::cos)),
        ("tan", |it, _, a| math1(it, a, f64::tan)),
        ("asin", |it, _, a| math1(it, a, f64::asin)),
        ("acos", |it, _, a| math1(it, a, f64::acos)),
        ("atan", |it, _, a| math1(it, a, f64::atan)),
        ("sinh", |it, _, a| math1(it, a, f64::sinh)),
        ("cosh", |it, _, a| math1(it, a, f64::cosh)),
        ("tanh", |it, _, a| math1(it, a, f64::tanh)),
        ("fround", |it, _, a| math1(it, a, |x| x as f32 as f64)),
        ("atan2", math_atan2),
        ("pow", math_pow),
        ("min", math_min),
        ("max", math_max),
        ("hypot", math_hypot),
    ];
    for (name, f) in unary {
        method(it, m, name, *f);
    }
    it.globals.insert("Math", Value::Obj(m));
}

fn math1(it: &mut Interp, args: &[Value], f: fn(f64) -> f64) -> R<Value> {
    let x = it.to_number(&arg(args, 0))?;
    Ok(Value::Num(f(x)))
}

fn js_round(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    if x > 0.0 && x < 0.5 {
        return 0.0;
    }
    if (-0.5..0.0).contains(&x) {
        return -0.0;
    }
    (x + 0.5).floor()
}

fn js_sign(x: f64) -> f64 {
    if x.is_nan() || x == 0.0 {
        x
    } else {
        x.signum()
    }
}

fn math_atan2(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let y = it.to_number(&arg(args, 0))?;
    let x = it.to_number(&arg(args, 1))?;
    Ok(Value::Num(y.atan2(x)))
}

fn math_pow(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let x = it.to_number(&arg(args, 0))?;
    let y = it.to_number(&arg(args, 1))?;
    Ok(Value::Num(js_pow(x, y)))
}

fn math_min(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let mut out = f64::INFINITY;
    for a in args {
        let x = it.to_number(a)?;
        if x.is_nan() {
            return Ok(Value::Num(f64::NAN));
        }
        if x < out || (x == 0.0 && out == 0.0 && x.is_sign_negative()) {
            out = x;
        }
    }
    Ok(Value::Num(out))
}

fn math_max(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let mut out = f64::NEG_INFINITY;
    for a in args {
        let x = it.to_number(a)?;
        if x.is_nan() {
            return Ok(Value::Num(f64::NAN));
        }
        if x > out || (x == 0.0 && out == 0.0 && out.is_sign_negative()) {
            out = x;
        }
    }
    Ok(Value::Num(out))
}

fn math_hypot(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let mut sum = 0.0;
    for a in args {
        let x = it.to_number(a)?;
        sum += x * x;
    }
    Ok(Value::Num(sum.sqrt()))
}

// ---- JSON -----------------------------------------------------------------

fn install_json(it: &mut Interp) {
    let j = it.new_object().expect("builtin allocation");
    method(it, j, "stringify", json_stringify);
    method(it, j, "parse", json_parse);
    it.globals.insert("JSON", Value::Obj(j));
}

fn json_quote(s: &str) -> String {
    serde_json::to_string(s).unwrap_or_else(|_| "\"\"".into())
}

struct Stringifier {
    indent: String,
    stack: Vec<ObjId>,
}

impl Stringifier {
    fn value(&mut self, it: &mut Interp, v: &Value, cur_indent: &str) -> R<Option<String>> {
        it.tick()?;
        let mut v = v.clone();
        if let Value::Obj(_) = v {
            let to_json = it.get_named(&v, "toJSON")?;
            if it.is_callable(&to_json) {
                v = it.call(&to_json, v.clone(), Vec::new())?;
            }
        }
        Ok(Some(match &v {
            Value::Undefined => return Ok(None),
            Value::Null => "null".into(),
            Value::Bool(b) => b.to_string(),
            Value::Num(n) => {
                if n.is_finite() {
                    format_number(*n)
                } else {
                    "null".into()
                }
            }
            Value::Str(s) => json_quote(s),
            Value::Obj(id) => {
                let id = *id;
                if it.is_callable(&v) {
                    return Ok(None);
                }
                if self.stack.contains(&id) {
                    return it.type_error("Converting circular structure to JSON");
                }
                self.stack.push(id);
                let inner = format!("{cur_indent}{}", self.indent);
                let (open, close, parts) = if let Some(items) = it.array_items(&v) {
                    let items = items.clone();
                    let mut parts = Vec::with_capacity(items.len());
                    for x in &items {
                        parts.push(self.value(it, x, &inner)?.unwrap_or_else(|| "null".into()));
                    }
                    ('[', ']', parts)
                } else {
                    let keys = it.own_keys(&v)?;
                    let mut parts = Vec::new();
                    let sep = if self.indent.is_empty() { ":" } else { ": " };
                    for k in keys {
                        let x = it.get(&v, &Key::from_rc(k.clone()))?;
                        if let Some(s) = self.value(it, &x, &inner)? {
                            parts.push(format!("{}{sep}{s}", json_quote(&k)));
                        }
                    }
                    ('{', '}', parts)
                };
                self.stack.pop();
                let out = if parts.is_empty() {
                    format!("{open}{close}")
                } else if self.indent.is_empty() {
                    format!("{open}{}{close}", parts.join(","))
                } else {
                    format!(
                        "{open}\n{inner}{}\n{cur_indent}{close}",
                        parts.join(&format!(",\n{inner}"))
                    )
                };
                it.check_string_len(out.len())?;
                out
            }
        }))
    }
}

fn json_stringify(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let indent = match arg(args, 2) {
        Value::Num(n) => " ".repeat(n.clamp(0.0, 10.0) as usize),
        Value::Str(s) => s.chars().take(10).collect(),
        _ => String::new(),
    };
    let mut s = Stringifier {
        indent,
        stack: Vec::new(),
    };
    Ok(match s.value(it, &arg(args, 0), "")? {
        Some(out) => Value::str(&out),
        None => Value::Undefined,
    })
}

fn json_parse(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let text = it.to_string(&arg(args, 0))?;
    it.charge(text.len() as u64 / 16)?;
    match serde_json::from_str::<Json>(&text) {
        Ok(j) => it.from_json(&j),
        Err(e) => it.syntax_error(format!("Unexpected token in JSON ({e})")),
    }
}

// ---- console --------------------------------------------------------------

fn install_console(it: &mut Interp) {
    let c = it.new_object().expect("builtin allocation");
    let fns: &[(&'static str, NativeFn)] = &[
        ("log", |it, _, a| console_out(it, ConsoleLevel::Log, a)),
        ("info", |it, _, a| console_out(it, ConsoleLevel::Info, a)),
        ("debug", |it, _, a| console_out(it, ConsoleLevel::Debug, a)),
        ("trace", |it, _, a| console_out(it, ConsoleLevel::Debug, a)),
        ("dir", |it, _, a| console_out(it, ConsoleLevel::Log, a)),
        ("table", |it, _, a| console_out(it, ConsoleLevel::Log, a)),
        ("warn", |it, _, a| console_out(it, ConsoleLevel::Warn, a)),
        ("error", |it, _, a| console_out(it, ConsoleLevel::Error, a)),
        ("assert", console_assert),
    ];
    for (name, f) in fns {
        method(it, c, name, *f);
    }
    it.globals.insert("console", Value::Obj(c));
}

fn console_out(it: &mut Interp, level: ConsoleLevel, args: &[Value]) -> R<Value> {
    let line = format_args(it, args)?;
    it.console(level, line)?;
    Ok(Value::Undefined)
}

fn console_assert(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    if it.truthy(&arg(args, 0)) {
        return Ok(Value::Undefined);
    }
    let rest = format_args(it, args.get(1..).unwrap_or(&[]))?;
    let line = if rest.is_empty() {
        "Assertion failed".to_string()
    } else {
        format!("Assertion failed: {rest}")
    };
    it.console(ConsoleLevel::Error, line)?;
    Ok(Value::Undefined)
}

// ---- globals --------------------------------------------------------------

fn install_globals(it: &mut Interp) {
    let fns: &[(&'static str, NativeFn)] = &[
        ("parseInt", global_parse_int),
        ("parseFloat", global_parse_float),
        ("isNaN", global_is_nan),
        ("isFinite", global_is_finite),
        ("encodeURIComponent", global_encode_uri_component),
        ("decodeURIComponent", global_decode_uri_component),
        ("structuredClone", global_structured_clone),
        ("queueMicrotask", global_queue_microtask),
    ];
    for (name, f) in fns {
        let id = it.new_native(name, *f, None).expect("builtin allocation");
        it.globals.insert(name, Value::Obj(id));
    }
}

fn global_parse_int(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let s = it.to_string(&arg(args, 0))?;
    let radix = match arg(args, 1) {
        Value::Undefined => None,
        v => Some(it.to_number(&v)?),
    };
    Ok(Value::Num(parse_int(&s, radix)))
}

fn global_parse_float(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let s = it.to_string(&arg(args, 0))?;
    Ok(Value::Num(parse_float(&s)))
}

fn global_is_nan(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Bool(it.to_number(&arg(args, 0))?.is_nan()))
}

fn global_is_finite(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    Ok(Value::Bool(it.to_number(&arg(args, 0))?.is_finite()))
}

fn global_encode_uri_component(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let s = it.to_string(&arg(args, 0))?;
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-_.!~*'()".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    Ok(Value::str(&out))
}

fn global_decode_uri_component(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let s = it.to_string(&arg(args, 0))?;
    let b = s.as_bytes();
    let mut out = Vec::with_capacity(b.len());
    let mut i = 0;
    while i < b.len() {
        if b[i] == b'%' {
            let hex = s.get(i + 1..i + 3).and_then(|h| u8::from_str_radix(h, 16).ok());
            match hex {
                Some(x) => {
                    out.push(x);
                    i += 3;
                    continue;
                }
                None => {
                    let p = it.protos.error;
                    let _ = p;
                    return it.plain_error("URI malformed");
                }
            }
        }
        out.push(b[i]);
        i += 1;
    }
    match String::from_utf8(out) {
        Ok(s) => Ok(Value::str(&s)),
        Err(_) => it.plain_error("URI malformed"),
    }
}

fn global_structured_clone(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let j = it.to_json(&arg(args, 0))?;
    it.from_json(&j)
}

fn global_queue_microtask(it: &mut Interp, _this: &Value, args: &[Value]) -> R<Value> {
    let f = arg(args, 0);
    if !it.is_callable(&f) {
        return it.type_error("The callback provided as parameter 1 is not a function.");
    }
    it.jobs.push_back(crate::interp::Job::React {
        handler: f,
        arg: Value::Undefined,
        derived: None,
        rejected: false,
    });
    Ok(Value::Undefined)
}
